function apply(fn, x) {
  return fn(x);
}

function twice(fn) {
  return function (x) {
    return fn(fn(x));
  };
}

function inc(x) {
  return x + 1;
}

const addTwo = twice(inc);
console.log(apply(inc, 1));
console.log(addTwo(5));
console.log([1, 2, 3].map(inc).join(','));
