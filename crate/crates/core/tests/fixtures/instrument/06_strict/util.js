"use strict";

exports.show = function show(x) {
  "use strict";
  return JSON.stringify(x);
};
