"""Lists allocation instructions of class files with javatools' disassembler.

Output is tab-separated: class, method, descriptor, bytecode index,
allocated type (source form), line ('-' when the line table has none) and
the ordinal among same-typed allocations of the method.

    python3 tools/classfiles/listing.py fixtures/classes > fixtures/classes/listing.tsv
"""

import os
import sys

import javatools
from javatools import opcodes

PRIMS = {'Z': 'boolean', 'C': 'char', 'F': 'float', 'D': 'double', 'B': 'byte',
         'S': 'short', 'I': 'int', 'J': 'long'}
ATYPES = {4: 'boolean', 5: 'char', 6: 'float', 7: 'double', 8: 'byte', 9: 'short', 10: 'int', 11: 'long'}


def source_form(desc):
    dims = len(desc) - len(desc.lstrip('['))
    base = desc[dims:]
    name = base[1:-1].replace('/', '.') if base.startswith('L') else PRIMS[base]
    return name + '[]' * dims


def class_name(cpool, index):
    return cpool.deref_const(index)


def line_for(code, offset):
    # javatools answers 0 before the first entry and for empty tables.
    line = code.get_line_for_offset(offset)
    return str(line) if line else '-'


def rows(path):
    cf = javatools.unpack_classfile(path)
    cls = cf.get_this().replace('/', '.')
    for m in cf.methods:
        code = m.get_code()
        if code is None:
            continue
        seen = {}
        for offset, op, args in code.disassemble():
            if op == opcodes.OP_new:
                ty = class_name(cf.cpool, args[0]).replace('/', '.')
            elif op == opcodes.OP_newarray:
                ty = ATYPES[args[0]] + '[]'
            elif op == opcodes.OP_anewarray:
                elem = class_name(cf.cpool, args[0])
                ty = (source_form(elem) if elem.startswith('[') else elem.replace('/', '.')) + '[]'
            elif op == opcodes.OP_multianewarray:
                ty = source_form(class_name(cf.cpool, args[0]))
            else:
                continue
            ordinal = seen.get(ty, 0)
            seen[ty] = ordinal + 1
            yield (cls, m.get_name(), m.get_descriptor(), str(offset), ty, line_for(code, offset), str(ordinal))


if __name__ == '__main__':
    root = sys.argv[1]
    paths = sorted(os.path.join(d, f) for d, _, fs in os.walk(root) for f in fs if f.endswith('.class'))
    out = [r for p in paths for r in rows(p)]
    for r in sorted(out, key=lambda r: (r[0], r[1], r[2], int(r[3]))):
        print('\t'.join(r))
