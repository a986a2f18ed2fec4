function greet(greeting, punctuation) {
  return greeting + ', ' + this.name + punctuation;
}

function sum() {
  let s = 0;
  for (let i = 0; i < arguments.length; i++) {
    s += arguments[i];
  }
  return s;
}

const person = { name: 'Ada' };
console.log(greet.call(person, 'Hello', '!'));
console.log(sum.apply(null, [1, 2, 3]));
const bound = greet.bind(person, 'Hi');
console.log(bound('?'));
