var r = /a\/b[/]/g, t = `x${1 + `y${2}`}`;
label: for (;;) { break label; }
