from jawa.cf import ClassFile
from jawa.assemble import assemble
from jawa.attributes.line_number_table import LineNumberTableAttribute, line_number_entry
cf = ClassFile.create('Hello')
cf.version = (49, 0)
m = cf.methods.create('main', '([Ljava/lang/String;)V', code=True)
m.access_flags.acc_static = True
m.code.max_locals = 1
m.code.max_stack = 2
c = cf.constants
m.code.assemble(assemble([
  ('getstatic', c.create_field_ref('java/lang/System','out','Ljava/io/PrintStream;')),
  ('ldc', c.create_string('hello, world')),
  ('invokevirtual', c.create_method_ref('java/io/PrintStream','println','(Ljava/lang/String;)V')),
  ('invokestatic', c.create_method_ref('java/lang/System','gc','()V')),
  ('return',),
]))
lnt = m.code.attributes.create(LineNumberTableAttribute)
lnt.line_no = [line_number_entry(0,3), line_number_entry(8,4), line_number_entry(11,5)]
with open('Hello.class','wb') as f: cf.save(f)
