const o = {};
o.x = 1;
Object.assign(o, { y: 2 });
o;
