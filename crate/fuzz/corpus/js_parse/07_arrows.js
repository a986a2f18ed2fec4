const sq = x => x * x;
const add = (a, b) => a + b;
const compose = (f, g) => x => f(g(x));
const obj = () => ({ value: sq(3) });

const sqThenInc = compose(y => add(y, 1), sq);
console.log(sqThenInc(4));
console.log(obj().value);
