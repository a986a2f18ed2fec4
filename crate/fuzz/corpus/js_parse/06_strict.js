'use strict';
const util = require('./util');

function describe(x) {
  'use strict';
  return typeof x + ':' + util.show(x);
}

console.log(describe(42));
console.log(describe('s'));
