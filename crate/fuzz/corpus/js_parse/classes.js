class A extends B { #p = 1; static m() { return super.m?.(); } get x() { return this.#p; } }
