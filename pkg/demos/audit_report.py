"""
Auditing the identities
=======================

Every bundled scenario can be audited: each catalogued identity is
evaluated on random points of a box and its normalized residual recorded.
FORCED rows must vanish to round-off.  REPORTED rows measure how far a
stated claim is from holding and are published without a verdict.
"""

from gchs.audit import run_audit
from gchs.scenario import bundled, load_scenario

sc = load_scenario(bundled("phase4"))
report = run_audit(sc.audit_problem(), samples=200, seed=sc.audit.seed)

print(f"usable points: {report.usable_fraction:.0%}")
for r in report.results:
    if r.verdict == "skipped":
        continue
    sign = f" sign {r.sign}" if r.sign else ""
    print(f"{r.identity_id:34s} {r.cls:8s} max {r.max_residual:9.2e}  {r.verdict}{sign}")

# The generalized Jacobi identity is a REPORTED row: it fails here.
print("Jacobi residual:", report["I03-th3-jacobi"].max_residual)
