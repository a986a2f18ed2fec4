const math = require('./lib/math');

const values = [1, 2, 3, 4];
console.log(math.total(values));
console.log(math.add(10, 20));
