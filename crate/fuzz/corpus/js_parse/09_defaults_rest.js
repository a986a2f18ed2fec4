function pad(s, width = 6, fill = '.') {
  return s.length >= width ? s : pad(fill + s, width, fill);
}

function joinAll(sep, ...parts) {
  return parts.map((p) => pad(p)).join(sep);
}

const args = ['a', 'bb', 'ccc'];
console.log(joinAll('|', ...args));
console.log(pad('x', 3, '*'));
