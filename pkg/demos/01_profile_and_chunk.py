"""
Profiling and chunking a small Oracle script
============================================

Count feature-class hits in a script, then cut it into statement-aligned
chunks and check that gluing the chunks back together gives the original.
"""

from oramig.chunker import ChunkConfig, chunk
from oramig.lexer import Dialect
from oramig.taxonomy import SourceScript, default_taxonomy, profile

TEXT = """\
-- nightly cleanup; the word BACKUP in this comment is not counted
SET SERVEROUTPUT ON
SELECT NVL(status, 'none') FROM orders WHERE id > 10;
CREATE OR REPLACE PROCEDURE purge_audit (p_days IN NUMBER) IS
BEGIN
  DELETE FROM audit_log WHERE created < SYSDATE - p_days;
  COMMIT;
EXCEPTION
  WHEN OTHERS THEN ROLLBACK;
END purge_audit;
/
ALTER TABLESPACE users ADD DATAFILE 'users02.dbf' SIZE 100M;
"""

script = SourceScript("cleanup.sql", Dialect.ORACLE, TEXT)
taxonomy = default_taxonomy(Dialect.ORACLE)

# Hits per class, and the share of the script each class accounts for.
prof = profile(script, taxonomy)
print(f"{script.line_count} lines, size class {script.size_class}")
for name, n in prof.counts.items():
    print(f"  {name:<20} {n:3d}")

# A deliberately small byte limit so the procedure body is split at its inner statements.
chunks = chunk(script, taxonomy=taxonomy, config=ChunkConfig(max_chunk_bytes=160))
for c in chunks:
    print(f"chunk {c.index}: bytes {c.byte_span}, {c.boundary_kind}")

# Chunks tile the script with no gaps, so plain concatenation restores it.
assert "".join(c.text for c in chunks) == TEXT
print("reassembled text is byte-identical")
