function square(x) {
  return x * x;
}

function sumOfSquares(a, b) {
  return square(a) + square(b);
}

function factorial(n) {
  return n <= 1 ? 1 : n * factorial(n - 1);
}

console.log(sumOfSquares(3, 4));
console.log(factorial(6));
