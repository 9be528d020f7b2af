"""Sizing rules and certificates for three loss families."""

import json
import math

from riskcert import certifier as ct

requests = {
    "least squares": ct.SizingRequest("least_squares", n=4096, d=2, alpha=1.0, lam=1.0),
    "logistic, T=2": ct.SizingRequest("logistic", n=4096, d=2, alpha=1.0, lam=0.5, T=2.0),
    "hinge, q=1": ct.SizingRequest("hinge", n=1024, d=2, alpha=1.0, lam=0.5, q=1.0),
    "hinge, q=inf": ct.SizingRequest("hinge", n=1024, d=2, alpha=1.0, lam=0.5, q=math.inf),
}
for name, req in requests.items():
    rep = ct.certify(req)
    print(f"{name:14s} M={rep.M:2d} L={rep.L:3d} W={rep.W} S_cap={rep.S_cap:5d} "
          f"EstError={rep.est_error:10.4g} AppError={rep.app_error:10.4g} rate n^{rep.exponent:.4f}")

# The constants are loose: the certificate is only informative at very large n.
req = requests["least squares"]
for n in (10 ** 4, 10 ** 8, 10 ** 12):
    print(f"n=1e{int(math.log10(n))}: total = {ct.certify(ct.SizingRequest(**{**req.to_dict(), 'n': n})).total:.4g}")

print(json.dumps(ct.certify(req).to_dict(), indent=1)[:400], "...")
