const counter = {
  count: 0,
  bump: function (by) {
    this.count += by;
    return this;
  },
  report() {
    return 'count=' + this.count;
  },
};

class Stack {
  constructor() {
    this.items = [];
  }
  push(x) {
    this.items.push(x);
    return this.size();
  }
  size() {
    return this.items.length;
  }
}

counter.bump(2).bump(3);
console.log(counter.report());
const s = new Stack();
s.push('a');
console.log(s.push('b'));
