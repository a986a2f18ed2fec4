function parse(text) {
  if (text === '') {
    throw new Error('empty input');
  }
  return Number(text);
}

function safeParse(text) {
  try {
    return parse(text);
  } catch (e) {
    return 'error: ' + e.message;
  } finally {
    log('parsed ' + JSON.stringify(text));
  }
}

function log(msg) {
  console.log(msg);
}

console.log(safeParse('12'));
console.log(safeParse(''));
