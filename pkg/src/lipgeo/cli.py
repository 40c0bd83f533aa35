"""Command-line client for the mechanism-design service.

Subcommands mirror the HTTP endpoints (analyze, design, sweep, verify)
plus `serve` to run the service itself. By default requests are routed
in-process to the FastAPI app, so no server is needed; --server points a
command at a remote instance instead.

Output is deterministic: every float renders with 12 significant digits,
rows and keys keep a fixed order, so repeated runs are byte-identical.
Artifacts (mechanism JSON, sweep CSV) are always in nats; --bits converts
printed summaries only.

Exit codes: 0 success, 1 invalid input, 2 degenerate instance (no utility
direction), 3 verification failed.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import math
import sys
from typing import Optional

import httpx

__all__ = ["main"]

LN2 = math.log(2.0)

SWEEP_COLUMNS = [
    "epsilon",
    "p1_lower",
    "p1_upper",
    "p1_point",
    "p2_lower",
    "p2_upper",
    "p2_point",
    "p1_prime",
    "p2_prime",
    "chi2",
    "mech1_exact_mi",
    "mech1_exact_lip",
    "mech2_exact_mi",
    "mech2_exact_lip",
    "oracle_mi",
    "in_validity_range",
]

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DEGENERATE = 2
EXIT_VERIFY_FAILED = 3


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _quantize(obj):
    """Round floats to 12 significant digits for stable serialization."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {key: _quantize(value) for key, value in obj.items()}
    if isinstance(obj, list):
        return [_quantize(item) for item in obj]
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_quantize(obj), indent=2) + "\n"


def _call(server: Optional[str], path: str, payload: dict) -> tuple[int, dict]:
    if server:
        with httpx.Client(base_url=server.rstrip("/"), timeout=600.0) as client:
            response = client.post(path, json=payload)
            return response.status_code, response.json()

    from .service.app import create_app

    async def go() -> tuple[int, dict]:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://lipgeo.internal", timeout=None
        ) as client:
            response = await client.post(path, json=payload)
            return response.status_code, response.json()

    return asyncio.run(go())


def _load_json_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise SystemExit(_fail(f"cannot read {path}: {exc}"))
    except json.JSONDecodeError as exc:
        raise SystemExit(_fail(f"{path} is not valid JSON: {exc}"))


def _fail(message: str) -> int:
    print(json.dumps({"error": "InvalidInput", "detail": message}), file=sys.stderr)
    return EXIT_INPUT


def _error_exit(body: dict) -> int:
    print(json.dumps(body, sort_keys=True), file=sys.stderr)
    if body.get("error") == "DegenerateSpectrum":
        return EXIT_DEGENERATE
    return EXIT_INPUT


def _vector(values: list[float]) -> str:
    return ", ".join(_fmt(v) for v in values)


def _in_unit(value: float, bits: bool) -> str:
    if bits:
        return f"{_fmt(value / LN2)} bits"
    return f"{_fmt(value)} nats"


def cmd_analyze(args) -> int:
    payload = {"instance": _load_json_file(args.instance)}
    status, body = _call(args.server, "/analyze", payload)
    if status != 200:
        return _error_exit(body)
    if args.json:
        sys.stdout.write(_dump_json(body))
        return EXIT_DEGENERATE if body.get("degenerate") else EXIT_OK
    lines = [
        f"alphabet size: {body['k']}",
        f"sigma_max: {_fmt(body['sigma_max'])}",
        f"sigma_min: {_fmt(body['sigma_min'])}",
        f"singular values: {_vector(body['singular_values'])}",
    ]
    if body.get("degenerate"):
        lines.append(f"degenerate: {body.get('detail', 'no utility direction')}")
    else:
        lines.append(f"l_star: {_vector(body['l_star'])}")
    lines.append("W:")
    lines.extend("  " + "  ".join(_fmt(v) for v in row) for row in body["w"])
    lines.append(f"sqrt_px: {_vector(body['sqrt_px'])}")
    lines.append(
        "validity thresholds: "
        f"c1={_fmt(body['c1'])} c2={_fmt(body['c2'])} "
        f"c1'={_fmt(body['c1_prime'])} c2'={_fmt(body['c2_prime'])}"
    )
    print("\n".join(lines))
    return EXIT_DEGENERATE if body.get("degenerate") else EXIT_OK


def cmd_design(args) -> int:
    payload = {
        "instance": _load_json_file(args.instance),
        "family": args.family,
    }
    if args.epsilon is not None:
        payload["epsilon"] = args.epsilon
    status, body = _call(args.server, "/design", payload)
    if status != 200:
        return _error_exit(body)
    mech = body["mechanism"]
    if args.output is None:
        sys.stdout.write(_dump_json(mech))
        return EXIT_OK
    with open(args.output, "w", encoding="utf-8") as handle:
        handle.write(_dump_json(mech))
    bounds = body["bounds"]
    audit = body["audit"]
    point = bounds.get("point")
    lines = [
        f"family: {mech['constraint']}_{mech['approach']}",
        f"epsilon: {_fmt(mech['epsilon'])}",
        f"in validity range: {str(mech['in_validity_range']).lower()}",
        "scaling factors: "
        f"plus={_fmt(mech['plus_factor'])} minus={_fmt(mech['minus_factor'])} "
        f"symmetric={_fmt(mech['symmetric_factor'])}",
        f"p_u: {_vector(mech['p_u'])}",
        "utility bounds: "
        f"lower={_in_unit(bounds['lower'], args.bits)} "
        f"point={'-' if point is None else _in_unit(point, args.bits)} "
        f"upper={_in_unit(bounds['upper'], args.bits)}",
        f"exact utility: {_in_unit(mech['exact_utility'], args.bits)}",
        f"approx utility (2nd order): {_in_unit(mech['approx_utility'], args.bits)}",
        f"exact LIP leakage: {_in_unit(mech['exact_lip'], args.bits)}",
        f"exact max-lift leakage: {_in_unit(mech['exact_maxlift'], args.bits)}",
        f"audit: {'PASS' if audit['passed'] else 'FAIL: ' + ', '.join(audit['violations'])}",
        f"wrote mechanism to {args.output}",
    ]
    print("\n".join(lines))
    return EXIT_OK


def _sweep_csv(rows: list[dict]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        cells = []
        for column in SWEEP_COLUMNS:
            value = row.get(column)
            if value is None:
                cells.append("")
            elif isinstance(value, bool):
                cells.append("true" if value else "false")
            else:
                cells.append(_fmt(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    payload = {
        "instance": _load_json_file(args.instance),
        "epsilon_start": args.start,
        "epsilon_end": args.end,
        "steps": args.steps,
        "include_oracle": args.oracle,
        "oracle_resolution": args.resolution,
        "oracle_u_cardinality": args.u_cardinality,
    }
    status, body = _call(args.server, "/sweep", payload)
    if status != 200:
        return _error_exit(body)
    text = _sweep_csv(body["rows"])
    if args.output is None:
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(text)
        print(f"wrote {len(body['rows'])} rows to {args.output}")
    return EXIT_OK


def cmd_verify(args) -> int:
    payload = {
        "instance": _load_json_file(args.instance),
        "mechanism": _load_json_file(args.mechanism),
    }
    status, body = _call(args.server, "/verify", payload)
    if status != 200:
        return _error_exit(body)
    worst = max(body["residuals"].values())
    lines = [
        f"family: {body['family']}",
        f"budget: {_fmt(body['budget'])}",
        f"exact utility: {_in_unit(body['exact_utility'], args.bits)}",
        f"exact LIP leakage: {_in_unit(body['exact_lip'], args.bits)}",
        f"exact max-lift leakage: {_in_unit(body['exact_maxlift'], args.bits)}",
        f"leakage within budget: {str(body['leakage_within_budget']).lower()}",
        f"worst residual: {_fmt(worst)}",
        f"violations: {', '.join(body['violations']) if body['violations'] else '(none)'}",
        f"verdict: {'PASS' if body['passed'] else 'FAIL'}",
    ]
    print("\n".join(lines))
    return EXIT_OK if body["passed"] else EXIT_VERIFY_FAILED


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipgeo",
        description="design and audit lift-bounded privacy mechanisms",
    )
    parser.add_argument(
        "--server",
        default=None,
        help="base URL of a running service; default runs the app in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="spectral analysis of an instance")
    p_analyze.add_argument("instance", help="instance JSON file")
    p_analyze.add_argument("--json", action="store_true", help="emit the raw report")
    p_analyze.set_defaults(func=cmd_analyze)

    p_design = sub.add_parser("design", help="synthesize a mechanism")
    p_design.add_argument("instance", help="instance JSON file")
    p_design.add_argument(
        "--family",
        required=True,
        choices=["lip_first", "lip_second", "maxlift_first", "maxlift_second"],
        help="privacy functional and box construction",
    )
    p_design.add_argument("--epsilon", type=float, default=None, help="budget override")
    p_design.add_argument(
        "--output", default=None, help="write the mechanism JSON here (default: stdout)"
    )
    p_design.add_argument("--bits", action="store_true", help="print summaries in bits")
    p_design.set_defaults(func=cmd_design)

    p_sweep = sub.add_parser("sweep", help="bounds across an epsilon grid, as CSV")
    p_sweep.add_argument("instance", help="instance JSON file")
    p_sweep.add_argument("--start", type=float, required=True, help="first epsilon")
    p_sweep.add_argument("--end", type=float, required=True, help="last epsilon")
    p_sweep.add_argument("--steps", type=int, required=True, help="number of rows")
    p_sweep.add_argument(
        "--oracle", action="store_true", help="include the exhaustive-search column"
    )
    p_sweep.add_argument(
        "--resolution", type=int, default=1000, help="oracle grid resolution"
    )
    p_sweep.add_argument(
        "--u-cardinality", type=int, default=2, help="oracle output alphabet size"
    )
    p_sweep.add_argument(
        "--output", default=None, help="write CSV here (default: stdout)"
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="audit a mechanism against an instance")
    p_verify.add_argument("instance", help="instance JSON file")
    p_verify.add_argument("mechanism", help="mechanism JSON file")
    p_verify.add_argument("--bits", action="store_true", help="print summaries in bits")
    p_verify.set_defaults(func=cmd_verify)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for degeneracy
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_INPUT
    except httpx.HTTPError as exc:
        return _fail(f"request failed: {exc}")


if __name__ == "__main__":
    sys.exit(main())
