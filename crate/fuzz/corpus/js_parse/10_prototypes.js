var Point = require('./shapes');

var p = new Point(3, 4);
console.log(p.norm());
console.log(p.dot(new Point(1, 1)));
