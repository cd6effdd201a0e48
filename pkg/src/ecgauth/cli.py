"""Command-line surface: synth, preprocess, enroll, auth, eval, sweep, serve.

Exit codes are a stable contract: 0 success/Known, 1 partial failure,
2 usage or input error, 3 Unknown, 4 Rejected.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from . import sweep as sweep_mod
from .authenticate import (
    KNOWN,
    REJECTED,
    UNKNOWN,
    ConfusionMatrix,
    authenticate,
    metrics,
    parse_actual_label,
    run_trials,
)
from .config import load_config_file, merged_config, toolkit_config
from .enrollment import enroll, load_db_path, new_db, save_db_path
from .errors import DuplicateEntityError, EcgAuthError
from .records import read_record_path, write_record_path
from .preprocess import preprocess_pipeline
from .synth import SynthSpec, synth_ecg

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2
EXIT_UNKNOWN = 3
EXIT_REJECTED = 4

_OUTCOME_EXIT = {
    KNOWN: EXIT_OK,
    UNKNOWN: EXIT_UNKNOWN,
    REJECTED: EXIT_REJECTED,
}


def _warn(args, message: str) -> None:
    if not args.quiet:
        print(f"warning: {message}", file=sys.stderr)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _load_flat_config(args) -> dict:
    layers = []
    if getattr(args, "config", None):
        layers.append(load_config_file(args.config))
    return merged_config(*layers)


def _fmt(value, missing="") -> str:
    if value is None:
        return missing
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


# ---------------------------------------------------------------- synth

_SYNTH_KEYS = {
    "n_subjects": int,
    "n_unknown": int,
    "n_test_variants": int,
    "fs": float,
    "train_duration_s": float,
    "test_duration_s": float,
    "heart_rate_bpm": float,
    "seed": int,
    "noise_snr_db": float,
    "baseline_drift_mv_per_s": float,
    "pli_amplitude_mv": float,
    "pli_freq_hz": float,
}

_SYNTH_DEFAULTS = {
    "n_unknown": 2,
    "n_test_variants": 1,
    "fs": 250.0,
    "train_duration_s": 52.0,
    "test_duration_s": 16.0,
    "heart_rate_bpm": 60.0,
    "seed": 0,
    "noise_snr_db": math.inf,
    "baseline_drift_mv_per_s": 0.0,
    "pli_amplitude_mv": 0.0,
    "pli_freq_hz": 50.0,
}


def _read_synth_spec(path: Path) -> dict:
    values = dict(_SYNTH_DEFAULTS)
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in _SYNTH_KEYS:
                raise EcgAuthError(f"{path}:{line_no}: bad synth spec line {line!r}")
            try:
                values[key] = _SYNTH_KEYS[key](value.strip())
            except ValueError:
                raise EcgAuthError(f"{path}:{line_no}: bad value {value.strip()!r}") from None
    if "n_subjects" not in values:
        raise EcgAuthError(f"{path}: n_subjects is required")
    if not (0 <= values["n_unknown"] < values["n_subjects"]):
        raise EcgAuthError("n_unknown must be in [0, n_subjects)")
    return values


def cmd_synth(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.is_file():
        return _fail(f"synth spec not found: {spec_path}")
    try:
        values = _read_synth_spec(spec_path)
    except EcgAuthError as exc:
        return _fail(str(exc))
    if args.seed is not None:
        values["seed"] = args.seed

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    common = dict(
        n_subjects=values["n_subjects"],
        fs=values["fs"],
        heart_rate_bpm=values["heart_rate_bpm"],
        morphology_seed=values["seed"],
        noise_snr_db=values["noise_snr_db"],
        baseline_drift_mv_per_s=values["baseline_drift_mv_per_s"],
        pli_amplitude_mv=values["pli_amplitude_mv"],
        pli_freq_hz=values["pli_freq_hz"],
    )
    try:
        train_spec = SynthSpec(duration_s=values["train_duration_s"], **common)
        test_spec = SynthSpec(duration_s=values["test_duration_s"], **common)
    except EcgAuthError as exc:
        return _fail(f"invalid synth spec: {exc}")

    n_enrolled = values["n_subjects"] - values["n_unknown"]
    enroll_paths = []
    trial_rows = []
    for si in range(values["n_subjects"]):
        if si < n_enrolled:
            record = synth_ecg(train_spec, si, variant=0)
            name = f"{record.subject_id}_train.csv"
            write_record_path(record, out_dir / name)
            enroll_paths.append(name)
        for v in range(1, values["n_test_variants"] + 1):
            record = synth_ecg(test_spec, si, variant=v)
            suffix = f"_test{v}.csv" if values["n_test_variants"] > 1 else "_test.csv"
            name = f"{record.subject_id}{suffix}"
            write_record_path(record, out_dir / name)
            actual = f"known:{record.subject_id}" if si < n_enrolled else "unknown"
            trial_rows.append((name, actual))

    with open(out_dir / "enroll_manifest.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(enroll_paths) + "\n")
    with open(out_dir / "trials.csv", "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "actual"])
        writer.writerows(trial_rows)
    if not args.quiet:
        print(
            f"wrote {n_enrolled} training and {len(trial_rows)} test records to {out_dir}"
        )
    return EXIT_OK


# ---------------------------------------------------------------- preprocess

def cmd_preprocess(args) -> int:
    in_path = Path(args.infile)
    if not in_path.is_file():
        return _fail(f"record not found: {in_path}")
    try:
        config = toolkit_config(_load_flat_config(args))
        record = read_record_path(in_path)
        out = preprocess_pipeline(record, config.preprocess)
    except EcgAuthError as exc:
        return _fail(str(exc))
    write_record_path(out, args.outfile)
    return EXIT_OK


# ---------------------------------------------------------------- enroll

def _manifest_paths(path: Path) -> list[Path]:
    base = path.parent
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                out.append(base / line)
    return out


def cmd_enroll(args) -> int:
    manifest = Path(args.manifest)
    if not manifest.is_file():
        return _fail(f"manifest not found: {manifest}")
    try:
        config = toolkit_config(_load_flat_config(args))
    except EcgAuthError as exc:
        return _fail(str(exc))
    paths = _manifest_paths(manifest)
    if not paths:
        return _fail(f"manifest {manifest} lists no records")

    db = new_db(config)
    n_failed = 0
    for record_path in paths:
        try:
            record = read_record_path(record_path)
            enroll(db, record.subject_id, record, replace=args.replace)
        except DuplicateEntityError:
            _warn(args, f"{record_path}: duplicate entity id, skipped")
            n_failed += 1
        except (EcgAuthError, OSError) as exc:
            _warn(args, f"{record_path}: {exc}")
            n_failed += 1
    if not db.models:
        print("error: all enrollments failed", file=sys.stderr)
        return EXIT_PARTIAL
    save_db_path(db, args.db)
    if not args.quiet and n_failed:
        print(f"warning: {n_failed} enrollment(s) failed", file=sys.stderr)
    if not args.quiet:
        print(f"enrolled {len(db.models)} entities -> {args.db}")
    return EXIT_OK


# ---------------------------------------------------------------- auth

def _print_decision(decision) -> None:
    print(
        ",".join(
            [
                decision.outcome,
                _fmt(decision.best_id),
                _fmt(decision.best_mse, missing="nan"),
                _fmt(decision.gate_mse, missing="nan"),
            ]
        )
    )


def _auth_via_server(args) -> int:
    import httpx

    record_text = Path(args.record).read_text(encoding="utf-8")
    payload = {"record_csv": record_text}
    if args.test_period is not None:
        payload["test_period_s"] = args.test_period
    response = httpx.post(args.server.rstrip("/") + "/authenticate", json=payload, timeout=60.0)
    if response.status_code != 200:
        return _fail(f"server returned {response.status_code}: {response.text}")
    body = response.json()
    print(
        ",".join(
            [
                body["outcome"],
                body.get("best_id") or "",
                _fmt(body.get("best_mse"), missing="nan"),
                _fmt(body.get("gate_mse"), missing="nan"),
            ]
        )
    )
    return _OUTCOME_EXIT[body["outcome"]]


def cmd_auth(args) -> int:
    if not Path(args.record).is_file():
        return _fail(f"record not found: {args.record}")
    if args.server:
        return _auth_via_server(args)
    if not Path(args.db).is_file():
        return _fail(f"database not found: {args.db}")
    try:
        db = load_db_path(args.db)
        record = read_record_path(args.record)
        decision = authenticate(db, record, args.test_period)
    except EcgAuthError as exc:
        return _fail(str(exc))
    _print_decision(decision)
    return _OUTCOME_EXIT[decision.outcome]


# ---------------------------------------------------------------- eval

def _read_trials(path: Path) -> list[tuple[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "actual"]:
            raise EcgAuthError(f"{path}: expected header path,actual")
        rows = [(row[0], row[1]) for row in reader if row]
    return rows


def _write_decisions(path, decisions) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial_id", "outcome", "best_id", "best_mse", "gate_mse"])
        for d in decisions:
            writer.writerow(
                [d.trial_id, d.outcome, _fmt(d.best_id), _fmt(d.best_mse), _fmt(d.gate_mse)]
            )


def _matrix_lines(cm) -> list[str]:
    return [
        ",actual_known,actual_unknown",
        f"predicted_known,{cm.known_known},{cm.known_unknown}",
        f"predicted_unknown,{cm.unknown_known},{cm.unknown_unknown}",
    ]


def _report(cm) -> None:
    for line in _matrix_lines(cm):
        print(line)
    print(f"rejected={cm.n_rejected}")
    m = metrics(cm)
    print(
        f"accuracy={m.accuracy:.6g} recall_unknown={m.recall_unknown:.6g} "
        f"identification_accuracy={m.identification_accuracy:.6g}"
    )


def _replay(args, trial_rows) -> int:
    cm = ConfusionMatrix()
    with open(args.replay, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["trial_id", "outcome", "best_id", "best_mse", "gate_mse"]:
            return _fail(f"{args.replay}: not a decision log")
        for row in reader:
            if not row:
                continue
            trial_index, outcome, best_id = int(row[0]), row[1], row[2]
            if outcome == REJECTED:
                cm.n_rejected += 1
                continue
            actual_known, actual_id = parse_actual_label(trial_rows[trial_index][1])
            if outcome == KNOWN:
                if actual_known:
                    cm.known_known += 1
                    if best_id == actual_id:
                        cm.n_known_correct_id += 1
                else:
                    cm.known_unknown += 1
            else:
                if actual_known:
                    cm.unknown_known += 1
                else:
                    cm.unknown_unknown += 1
    _report(cm)
    return EXIT_OK


def cmd_eval(args) -> int:
    trials_path = Path(args.trials)
    if not trials_path.is_file():
        return _fail(f"trial manifest not found: {trials_path}")
    try:
        trial_rows = _read_trials(trials_path)
    except EcgAuthError as exc:
        return _fail(str(exc))
    if not trial_rows:
        return _fail(f"trial manifest {trials_path} is empty")

    if args.replay:
        try:
            return _replay(args, trial_rows)
        except (EcgAuthError, ValueError, IndexError) as exc:
            return _fail(f"replay failed: {exc}")

    if not args.db or not Path(args.db).is_file():
        return _fail(f"database not found: {args.db}")
    try:
        db = load_db_path(args.db)
        if args.strict_gate is not None:
            db.global_config["gate_limit_factor"] = args.strict_gate
        base = trials_path.parent
        trials = []
        for rel_path, actual in trial_rows:
            parse_actual_label(actual)
            trials.append((read_record_path(base / rel_path), actual))
        cm, decisions = run_trials(db, trials, args.test_period, seed=args.seed)
    except (EcgAuthError, OSError) as exc:
        return _fail(str(exc))
    if args.decisions_out:
        _write_decisions(args.decisions_out, decisions)
    if args.matrix_out:
        with open(args.matrix_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(_matrix_lines(cm)) + f"\nrejected={cm.n_rejected}\n")
    _report(cm)
    return EXIT_OK


# ---------------------------------------------------------------- sweep

_PLAN_KEYS = {
    "variable": str,
    "grid": str,
    "repeats": int,
    "seed": int,
    "enroll_manifest": str,
    "trials": str,
    "trials_per_repeat": str,
}


def _read_plan_file(path: Path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in _PLAN_KEYS:
                raise EcgAuthError(f"{path}:{line_no}: bad plan line {line!r}")
            values[key] = _PLAN_KEYS[key](value.strip())
    for required in ("variable", "grid", "enroll_manifest", "trials"):
        if required not in values:
            raise EcgAuthError(f"{path}: plan key {required!r} is required")
    return values


def cmd_sweep(args) -> int:
    plan_path = Path(args.plan)
    if not plan_path.is_file():
        return _fail(f"plan file not found: {plan_path}")
    try:
        values = _read_plan_file(plan_path)
        base = plan_path.parent
        enroll_records = [
            read_record_path(p) for p in _manifest_paths(base / values["enroll_manifest"])
        ]
        trials_path = base / values["trials"]
        candidates = [
            (read_record_path(trials_path.parent / rel), actual)
            for rel, actual in _read_trials(trials_path)
        ]
        per_repeat = values.get("trials_per_repeat")
        per_repeat = None if per_repeat in (None, "none") else int(per_repeat)
        corpus = sweep_mod.SweepCorpus(
            enroll_records=enroll_records,
            trial_candidates=candidates,
            trials_per_repeat=per_repeat,
        )
        plan = sweep_mod.SweepPlan(
            variable=values["variable"],
            grid=[float(v) for v in values["grid"].split(",")],
            corpus=corpus,
            fixed=_load_flat_config(args),
            repeats=values.get("repeats", 5),
            seed=args.seed if args.seed is not None else values.get("seed", 0),
        )
    except (EcgAuthError, OSError, ValueError) as exc:
        return _fail(f"bad sweep plan: {exc}")

    curve = sweep_mod.run_sweep(plan)
    for point in curve.points:
        if not point.feasible:
            _warn(args, f"grid value {point.value:g} is infeasible for this corpus")
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        sweep_mod.emit_curve(curve, fh)
    argmax = curve.argmax_value
    print(f"argmax={'nan' if argmax is None else format(argmax, 'g')}s")
    return EXIT_OK


# ---------------------------------------------------------------- serve

def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    db_path = Path(args.db)
    if not db_path.is_file():
        return _fail(f"database not found: {db_path}")
    app = create_app(db_path=db_path)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning" if args.quiet else "info")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_common(parser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="PRNG seed override")
    parser.add_argument("--quiet", action="store_true", help="suppress warnings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecgauth",
        description="ECG biometric authentication toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="synth spec key=value file")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="run the conditioning pipeline on one record")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("enroll", help="enroll records listed in a manifest")
    p.add_argument("--manifest", required=True, help="one record path per line")
    p.add_argument("--db", required=True, help="output database path")
    p.add_argument("--replace", action="store_true", help="replace duplicate entity ids")
    _add_common(p)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("auth", help="authenticate one record against a database")
    p.add_argument("--db", help="database path (local mode)")
    p.add_argument("--record", required=True)
    p.add_argument("--test-period", type=float, default=None)
    p.add_argument("--server", help="authenticate via a running service instead")
    _add_common(p)
    p.set_defaults(func=cmd_auth)

    p = sub.add_parser("eval", help="run labeled trials and report the confusion matrix")
    p.add_argument("--db")
    p.add_argument("--trials", required=True, help="CSV manifest: path,actual")
    p.add_argument("--test-period", type=float, default=None)
    p.add_argument("--strict-gate", type=float, default=None, help="override gate_limit_factor")
    p.add_argument("--decisions-out", help="write the decision log CSV here")
    p.add_argument("--matrix-out", help="write the confusion matrix CSV here")
    p.add_argument("--replay", help="recompute metrics from a decision log instead")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a parameter sweep from a plan file")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True, help="curve CSV output path")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="serve enroll/authenticate over HTTP")
    p.add_argument("--db", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EcgAuthError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
