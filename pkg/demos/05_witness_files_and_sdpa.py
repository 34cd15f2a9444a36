"""Certificates as artifacts: witness files, re-verification, SDPA export.

A certified bound is only as good as its witness.  This demo saves the
storage operator behind a bound, re-verifies it from the file alone (no
solver in the loop), shows that a tampered claim fails, and exports the
compiled semidefinite program in the standard SDPA sparse format so any
external solver can reproduce the solve.

The command-line equivalents:

    pipeak analyze heat --witness-out w.json
    pipeak certify w.json
    pipeak analyze heat --sdpa heat.dat-s
"""

import json

from pipeak import convert, i2p_bound, load_builtin, verify_certificate
from pipeak.certify import build_noncoercive_lpi, deserialize_operator
from pipeak.sdp import read_sdpa, write_sdpa

pie = convert(load_builtin("heat"))
cert = i2p_bound(pie, form="dual")
print(f"heat dual bound: gamma = {cert.gamma:.5f} (certified: {cert.certified})")

# round-trip the witness through JSON, then re-verify from the file alone
blob = json.dumps({"gamma_squared": cert.gamma_squared, "witness": cert.witness})
data = json.loads(blob)
Q = deserialize_operator(data["witness"]["Q"])
report = verify_certificate(pie, Q, data["gamma_squared"], form="dual")
print(f"re-verified from file: passed = {report['passed']}")

# the same witness cannot back a stronger claim
report = verify_certificate(pie, Q, 0.25 * data["gamma_squared"], form="dual")
print(f"tampered claim (quarter level): passed = {report['passed']}")

# export the compiled program for external solvers
prog, _ = build_noncoercive_lpi(pie, "dual")
compiled = prog.compile()
write_sdpa(compiled, "heat_dual.dat-s")
parsed = read_sdpa("heat_dual.dat-s")
print(f"\nwrote heat_dual.dat-s: {parsed.nvars} variables, "
      f"blocks {parsed.block_struct}")
