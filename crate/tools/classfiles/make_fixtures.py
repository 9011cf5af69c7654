"""Writes the class-file fixtures under fixtures/classes/.

Class structure and constant pools come from jawa; method bodies are
assembled here because jawa cannot size tableswitch. Every class has a
no-op main so `java -Xverify:all -cp fixtures/classes <name>` loads and
verifies it.

    python3 tools/classfiles/make_fixtures.py fixtures/classes
"""

import os
import struct
import sys

from jawa.cf import ClassFile
from jawa.attributes.line_number_table import LineNumberTableAttribute, line_number_entry

SIMPLE = {
    'nop': 0x00, 'aconst_null': 0x01, 'iconst_0': 0x03, 'iconst_1': 0x04, 'iconst_2': 0x05,
    'iconst_3': 0x06, 'lconst_0': 0x09, 'aload_0': 0x2a, 'aload_1': 0x2b, 'astore_1': 0x4c,
    'astore_2': 0x4d, 'iload_0': 0x1a, 'iload_1': 0x1b, 'istore_1': 0x3c, 'pop': 0x57,
    'pop2': 0x58, 'dup': 0x59, 'return': 0xb1, 'areturn': 0xb0, 'ireturn': 0xac,
}
CP_U2 = {'new': 0xbb, 'anewarray': 0xbd, 'invokespecial': 0xb7, 'invokestatic': 0xb8,
         'ldc2_w': 0x14, 'checkcast': 0xc0, 'getstatic': 0xb2}
LOCAL = {'iload': 0x15, 'aload': 0x19, 'istore': 0x36, 'astore': 0x3a}
ATYPE = {'boolean': 4, 'char': 5, 'float': 6, 'double': 7, 'byte': 8, 'short': 9, 'int': 10, 'long': 11}


def size(ins, pc):
    op = ins[0]
    if op in SIMPLE:
        return 1
    if op in CP_U2 or op in ('goto', 'sipush'):
        return 3
    if op in ('newarray', 'bipush', 'ldc'):
        return 2
    if op == 'multianewarray':
        return 4
    if op in LOCAL:
        return 4 if ins[1] > 255 else 2
    if op == 'iinc':
        return 6 if ins[1] > 255 or not -128 <= ins[2] <= 127 else 3
    pad = (3 - pc % 4)
    if op == 'tableswitch':
        return 1 + pad + 12 + 4 * len(ins[3])
    if op == 'lookupswitch':
        return 1 + pad + 8 + 8 * len(ins[2])
    raise ValueError(op)


def assemble(body):
    """body: instructions, ('label', name) and ('line', n) markers.
    Returns (code bytes, line table)."""
    labels, pc = {}, 0
    for ins in body:
        if ins[0] == 'label':
            labels[ins[1]] = pc
        elif ins[0] != 'line':
            pc += size(ins, pc)
    out, lines = bytearray(), []
    for ins in body:
        op, pc = ins[0], len(out)
        if op == 'label':
            continue
        if op == 'line':
            lines.append((pc, ins[1]))
            continue
        rel = lambda name: labels[name] - pc
        if op in SIMPLE:
            out.append(SIMPLE[op])
        elif op in CP_U2:
            out += struct.pack('>BH', CP_U2[op], ins[1])
        elif op == 'ldc':
            out += struct.pack('>BB', 0x12, ins[1])
        elif op == 'goto':
            out += struct.pack('>Bh', 0xa7, rel(ins[1]))
        elif op == 'bipush':
            out += struct.pack('>Bb', 0x10, ins[1])
        elif op == 'sipush':
            out += struct.pack('>Bh', 0x11, ins[1])
        elif op == 'newarray':
            out += struct.pack('>BB', 0xbc, ATYPE[ins[1]])
        elif op == 'multianewarray':
            out += struct.pack('>BHB', 0xc5, ins[1], ins[2])
        elif op in LOCAL:
            if ins[1] > 255:
                out += struct.pack('>BBH', 0xc4, LOCAL[op], ins[1])
            else:
                out += struct.pack('>BB', LOCAL[op], ins[1])
        elif op == 'iinc':
            if size(ins, pc) == 6:
                out += struct.pack('>BBHh', 0xc4, 0x84, ins[1], ins[2])
            else:
                out += struct.pack('>BBb', 0x84, ins[1], ins[2])
        elif op == 'tableswitch':
            _, default, low, targets = ins
            out.append(0xaa)
            out += bytes(3 - pc % 4)
            out += struct.pack('>iii', rel(default), low, low + len(targets) - 1)
            for t in targets:
                out += struct.pack('>i', rel(t))
        elif op == 'lookupswitch':
            _, default, pairs = ins
            out.append(0xab)
            out += bytes(3 - pc % 4)
            out += struct.pack('>ii', rel(default), len(pairs))
            for key in sorted(pairs):
                out += struct.pack('>ii', key, rel(pairs[key]))
        else:
            raise ValueError(op)
        assert len(out) - pc == size(ins, pc), ins
    return bytes(out), lines


class Builder:
    def __init__(self, name, super_name='java/lang/Object'):
        self.cf = ClassFile.create(name, super_name)
        self.cf.version = (49, 0)
        self.name = name
        self.c = self.cf.constants
        self.method('<init>', '()V', [
            ('aload_0',), ('invokespecial', self.mref(super_name, '<init>', '()V')), ('return',)
        ], locals_=1, lines=False)
        self.method('main', '([Ljava/lang/String;)V', [('return',)], static=True, locals_=1, lines=False)

    def cls(self, internal):
        return self.c.create_class(internal).index

    def mref(self, cls, name, desc):
        return self.c.create_method_ref(cls, name, desc).index

    def new(self, internal):
        """new + dup + <init>()V + pop"""
        return [('new', self.cls(internal)), ('dup',),
                ('invokespecial', self.mref(internal, '<init>', '()V')), ('pop',)]

    def method(self, name, desc, body, static=False, locals_=4, lines=True):
        m = self.cf.methods.create(name, desc, code=True)
        m.access_flags.acc_public = True
        m.access_flags.acc_static = static
        code, table = assemble(body)
        m.code.max_locals = locals_
        m.code.max_stack = 8
        m.code._code = code
        if lines and table:
            lnt = m.code.attributes.create(LineNumberTableAttribute)
            lnt.line_no = [line_number_entry(pc, line) for pc, line in table]
        return m

    def save(self, root):
        path = os.path.join(root, self.name + '.class')
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, 'wb') as f:
            self.cf.save(f)


def plain():
    b = Builder('fx/Plain')
    b.method('make', '()Lfx/Plain;', [
        ('line', 10), *b.new('fx/Plain'),
        ('line', 11), ('new', b.cls('fx/Plain')), ('dup',),
        ('invokespecial', b.mref('fx/Plain', '<init>', '()V')), ('areturn',),
    ])
    return b


def arrays():
    b = Builder('fx/Arrays')
    b.method('fill', '()V', [
        ('line', 5), ('iconst_3',), ('newarray', 'int'), ('pop',),
        ('line', 6), ('iconst_2',), ('newarray', 'byte'), ('pop',),
        ('iconst_1',), ('newarray', 'int'), ('pop',),
        ('line', 7), ('iconst_1',), ('anewarray', b.cls('java/lang/String')), ('pop',),
        ('line', 8), ('iconst_2',), ('anewarray', b.cls('[I')), ('pop',),
        ('line', 9), ('iconst_1',), ('anewarray', b.cls('[Ljava/lang/Object;')), ('pop',),
        ('iconst_1',), ('newarray', 'double'), ('pop',),
        ('iconst_1',), ('newarray', 'boolean'), ('pop',),
        ('iconst_1',), ('newarray', 'char'), ('pop',),
        ('iconst_1',), ('newarray', 'long'), ('pop',),
        ('iconst_1',), ('newarray', 'short'), ('pop',),
        ('iconst_1',), ('newarray', 'float'), ('pop',),
        ('return',),
    ], static=True, locals_=0)
    return b


def multi():
    b = Builder('fx/Multi')
    b.method('grid', '()V', [
        ('line', 20), ('iconst_2',), ('iconst_3',), ('multianewarray', b.cls('[[I'), 2), ('pop',),
        ('line', 21), ('iconst_2',), ('multianewarray', b.cls('[[[Ljava/lang/String;'), 1), ('pop',),
        ('line', 22), ('iconst_1',), ('iconst_1',), ('iconst_1',),
        ('multianewarray', b.cls('[[[D'), 3), ('pop',),
        ('iconst_2',), ('iconst_3',), ('multianewarray', b.cls('[[I'), 2), ('pop',),
        ('return',),
    ], static=True, locals_=0)
    return b


def switch_body(b, kind, pad, first_line):
    """`pad` nops shift the switch to each alignment."""
    targets = ['a', 'b', 'c']
    body = [('line', first_line), *[('nop',)] * pad, ('iload_0',)]
    if kind == 'table':
        body.append(('tableswitch', 'dflt', 1, targets))
    else:
        body.append(('lookupswitch', 'dflt', {-7: 'a', 3: 'b', 1000: 'c'}))
    types = ['fx/Plain', 'java/lang/StringBuilder', 'fx/Plain']
    for i, (t, ty) in enumerate(zip(targets, types)):
        body += [('label', t), ('line', first_line + 1 + i), *b.new(ty), ('goto', 'end')]
    body += [('label', 'dflt'), ('line', first_line + 5), ('bipush', 4), ('newarray', 'int'), ('pop',),
             ('label', 'end'), ('return',)]
    return body


def table():
    b = Builder('fx/Table')
    for pad in range(4):
        b.method(f'sw{pad}', '(I)V', switch_body(b, 'table', pad, 100 * (pad + 1)), static=True, locals_=1)
    return b


def lookup():
    b = Builder('fx/Lookup')
    for pad in range(4):
        b.method(f'sw{pad}', '(I)V', switch_body(b, 'lookup', pad, 50 + 10 * pad), static=True, locals_=1)
    return b


def wide():
    b = Builder('fx/Wide')
    b.method('many', '(I)V', [
        ('line', 3), ('iload_0',), ('istore', 300),
        ('iconst_0',), ('istore', 299), ('iconst_0',), ('istore', 2),
        ('line', 4), ('iinc', 300, 1000), ('iinc', 2, 1), ('iinc', 299, -1),
        ('line', 5), *b.new('fx/Wide'),
        ('aconst_null',), ('astore', 400), ('aload', 400), ('pop',),
        ('line', 6), ('iload', 300), ('newarray', 'long'), ('pop',),
        ('return',),
    ], static=True, locals_=401)
    return b


def mixed():
    b = Builder('fx/Mixed')
    b.method('run', '(I)Ljava/lang/Object;', [
        ('line', 30), ('iload_1',), ('istore', 260),
        ('iload', 260), ('lookupswitch', 'out', {0: 'zero'}),
        ('label', 'zero'), ('line', 31), ('iload', 260), ('tableswitch', 'out', 5, ['five', 'six']),
        ('label', 'five'), ('line', 32), ('iinc', 260, 300), ('goto', 'out'),
        ('label', 'six'), ('line', 33), ('iconst_2',), ('iconst_2',), ('multianewarray', b.cls('[[Lfx/Mixed;'), 2), ('pop',),
        ('label', 'out'), ('line', 34), ('new', b.cls('fx/Mixed')), ('dup',),
        ('invokespecial', b.mref('fx/Mixed', '<init>', '()V')), ('areturn',),
    ], locals_=261)
    return b


def no_lines():
    b = Builder('fx/NoLines')
    b.method('make', '()V', [*b.new('fx/NoLines'), ('iconst_1',), ('anewarray', b.cls('fx/NoLines')), ('pop',), ('return',)],
             static=True, locals_=0, lines=False)
    return b


def late_lines():
    # Allocations ahead of the first line-table entry have no line.
    b = Builder('fx/LateLines')
    b.method('make', '()V', [
        *b.new('fx/LateLines'),
        ('line', 40), *b.new('fx/LateLines'),
        ('line', 41), ('iconst_1',), ('newarray', 'char'), ('pop',),
        ('return',),
    ], static=True, locals_=0)
    return b


def constants():
    # Long and double constants take two pool slots ahead of the class refs.
    b = Builder('fx/Constants')
    big = b.c.create_long(1 << 40).index
    dbl = b.c.create_double(2.5).index
    b.method('make', '()V', [
        ('line', 7), ('ldc2_w', big), ('pop2',), ('ldc2_w', dbl), ('pop2',),
        ('line', 8), *b.new('java/lang/StringBuilder'),
        ('line', 9), *b.new('fx/Constants'),
        ('return',),
    ], static=True, locals_=0)
    return b


def nested():
    b = Builder('fx/Outer$Inner')
    b.method('make', '()V', [
        ('line', 12), *b.new('fx/Outer$Inner'),
        ('line', 13), ('iconst_2',), ('anewarray', b.cls('fx/Outer$Inner')), ('pop',),
        ('return',),
    ], locals_=1)
    return b


def sub():
    # Allocations in a constructor of a subclass.
    b = Builder('fx/Sub', 'fx/Plain')
    b.method('<init>', '(I)V', [
        ('line', 15), ('aload_0',), ('invokespecial', b.mref('fx/Plain', '<init>', '()V')),
        ('line', 16), *b.new('fx/Plain'), *b.new('fx/Plain'),
        ('return',),
    ], locals_=2)
    return b


ALL = [plain, arrays, multi, table, lookup, wide, mixed, no_lines, late_lines, constants, nested, sub]

if __name__ == '__main__':
    root = sys.argv[1] if len(sys.argv) > 1 else 'fixtures/classes'
    for make in ALL:
        make().save(root)
