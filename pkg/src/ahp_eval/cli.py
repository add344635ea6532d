"""``ahp-eval`` command line.

Every subcommand resolves one effective configuration (built-in defaults,
then an optional ``--config`` JSON file, then explicit flags) and embeds it in
the reports it writes. The judge API key is read from ``AHP_JUDGE_API_KEY``
only.

Exit codes: 0 success, 2 configuration or argument error, 3 backend failure,
4 validation error (bad dataset, matrix, cache), 5 unsupported dataset,
6 incomplete cached tensor, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__, ahp
from .backends import (
    API_KEY_ENV,
    Backend,
    ConstantBackend,
    CountingBackend,
    FixtureBackend,
    LLMBackend,
    LLMConfig,
    OracleBackend,
    OracleProfile,
)
from .baselines import METHODS, run_baseline
from .cache import CacheCorruptError, JudgmentCache
from .criteria import GENERATED, CriterionSet, generate_criteria, load_criteria
from .dataset import ResponseSet, export_report, load_dataset, write_csv
from .errors import (
    AHPEvalError,
    BackendError,
    ConfigError,
    ConfigMismatchError,
    DatasetError,
    IncompleteTensorError,
    UnknownRunError,
    UnsupportedDatasetError,
)
from .metrics import ABLATION_CSV_HEADER, criteria_ablation, evaluate_scores, judgment_distribution
from .pipeline import EvaluationConfig, load_cached_tensor, load_run, request_count, resume, run_evaluation

EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_BACKEND, EXIT_VALIDATION, EXIT_UNSUPPORTED, EXIT_INCOMPLETE = 0, 1, 2, 3, 4, 5, 6

DEFAULTS: dict[str, Any] = {
    "dataset": None,
    "criteria": None,
    "out": "out",
    "cache": None,
    "state_dir": None,
    "backend": None,
    "model": None,
    "base_url": LLMConfig.base_url,
    "timeout": LLMConfig.timeout,
    "oracle_profile": None,
    "fixtures": None,
    "delta_big": None,
    "delta_small": None,
    "dry_run": False,
    "in_flight": 4,
    "requests_per_minute": None,
    "seed": 0,
    "m": 10,
    "k": 10,
    "sci_gap": None,
    "literal_scale": False,
    "resume": None,
    "method": None,
    "cefr_definitions": None,
    "scores": None,
    "sizes": None,
    "max_subsets": 256,
    "run_id": None,
    "quiet": False,
}

_SECRET_KEYS = {"api_key", "apikey", "token", "secret", "password"}


class UsageError(ConfigError):
    """Bad flag combination or value; reported with exit code 2."""


# --- configuration ------------------------------------------------------------


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS)
    explicit = {k: v for k, v in vars(args).items() if k not in ("command", "config", "func")}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        doc = {k.replace("-", "_"): v for k, v in doc.items()}
        secrets = sorted(k for k in doc if k.lower() in _SECRET_KEYS)
        if secrets:
            raise ConfigError(f"secrets are not accepted in config files ({', '.join(secrets)}); set {API_KEY_ENV}")
        unknown = sorted(set(doc) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(doc)
    cfg.update(explicit)
    cfg["command"] = args.command
    out = Path(cfg["out"])
    if cfg["cache"] is None and not cfg["dry_run"]:
        cfg["cache"] = str(out / "cache.jsonl")
    if cfg["state_dir"] is None:
        cfg["state_dir"] = str(out / "runs")
    if int(cfg["in_flight"]) < 1:
        raise UsageError("--in-flight must be at least 1")
    return cfg


def _provenance(cfg: dict[str, Any]) -> dict[str, Any]:
    """The effective configuration as embedded in reports (paths kept as given)."""
    return {k: cfg[k] for k in sorted(cfg) if cfg[k] is not None}


def _require_file(cfg: dict[str, Any], key: str, what: str) -> Path:
    if not cfg.get(key):
        raise UsageError(f"--{key.replace('_', '-')} is required ({what})")
    path = Path(cfg[key])
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def make_backend(cfg: dict[str, Any]) -> Backend:
    """Instantiate exactly one backend; validates paths and credentials, makes no calls."""
    if cfg["dry_run"]:
        return ConstantBackend()
    kind = cfg["backend"]
    if kind is None:
        raise UsageError("select a backend with --backend {llm,oracle,fixture} or use --dry-run")
    stray = {"llm": ("oracle_profile", "fixtures"), "oracle": ("fixtures",), "fixture": ("oracle_profile",)}[kind]
    for key in stray:
        if cfg.get(key):
            raise UsageError(f"--{key.replace('_', '-')} conflicts with --backend {kind}")
    if kind == "oracle":
        path = _require_file(cfg, "oracle_profile", "oracle profile")
        try:
            profile = OracleProfile.load(path)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid oracle profile {path}: {exc}") from exc
        overrides = {k: float(cfg[k]) for k in ("delta_big", "delta_small") if cfg.get(k) is not None}
        return OracleBackend(replace(profile, **overrides) if overrides else profile)
    if kind == "fixture":
        path = _require_file(cfg, "fixtures", "fixture file or directory")
        try:
            backend = FixtureBackend.load(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid fixtures {path}: {exc}") from exc
        if cfg.get("model"):
            backend.model_id = cfg["model"]
        return backend
    if not os.environ.get(API_KEY_ENV):
        raise ConfigError(f"the llm backend needs an API key in ${API_KEY_ENV}")
    config = LLMConfig(base_url=cfg["base_url"], model=cfg["model"] or LLMConfig.model, timeout=float(cfg["timeout"]))
    return LLMBackend(config)


def _open_cache(cfg: dict[str, Any]) -> JudgmentCache:
    return JudgmentCache(cfg["cache"]) if cfg["cache"] else JudgmentCache()


def _load_dataset(cfg: dict[str, Any]) -> ResponseSet:
    return load_dataset(_require_file(cfg, "dataset", "dataset"))


def _scores_with_metrics(doc: dict[str, Any], dataset: ResponseSet, cfg: dict[str, Any]) -> str | None:
    """Attach CI/sCI to ``doc`` when the dataset has ground truth; returns a summary line."""
    if dataset.ground_truth is None:
        doc["metrics"] = None
        return None
    rep = evaluate_scores(doc["scores"], dataset.ground_truth, gap=cfg["sci_gap"])
    doc["metrics"] = rep.to_json()
    sci = "n/a" if rep.sci is None else f"{rep.sci:.4f}"
    return f"CI {rep.ci:.4f}  sCI {sci}  (gap {rep.gap:g})"


def _echo(*lines: str | None) -> None:
    for line in lines:
        if line:
            print(line)


# --- commands -----------------------------------------------------------------


def cmd_gen_criteria(cfg: dict[str, Any]) -> int:
    dataset = _load_dataset(cfg)
    out = Path(cfg["out"])
    target = out / "criteria.json"
    if cfg["criteria"]:
        source = _require_file(cfg, "criteria", "criteria file")
        crit = load_criteria(source)
        out.mkdir(parents=True, exist_ok=True)
        if source.resolve() != target.resolve():
            shutil.copyfile(source, target)
        _echo(f"criteria supplied ({len(crit)}); generation skipped", "0 backend calls", f"criteria: {target}")
        return EXIT_OK
    crit, batches, calls = _generate(cfg, dataset, make_backend(cfg))
    out.mkdir(parents=True, exist_ok=True)
    crit.save(target)
    reasons = out / "reasons.jsonl"
    with reasons.open("w", encoding="utf-8") as fh:
        for b in batches:
            fh.write(json.dumps({"pair": list(b.pair), "reasons": list(b.reasons)}, ensure_ascii=False) + "\n")
    _echo(*(f"{i}. {c}" for i, c in enumerate(crit.criteria, 1)))
    _echo(f"{calls} backend calls", f"criteria: {target}")
    return EXIT_OK


def _generate(cfg: dict[str, Any], dataset: ResponseSet, backend: Backend):
    counting = CountingBackend(backend)
    crit, batches = generate_criteria(
        dataset, counting, m=int(cfg["m"]), k=int(cfg["k"]), seed=int(cfg["seed"]), in_flight=int(cfg["in_flight"])
    )
    return crit, batches, counting.total


def cmd_evaluate(cfg: dict[str, Any]) -> int:
    dataset = _load_dataset(cfg)
    out = Path(cfg["out"])
    crit_path = Path(cfg["criteria"]) if cfg["criteria"] else None
    if crit_path is not None:
        crit = load_criteria(_require_file(cfg, "criteria", "criteria file"))
    backend = make_backend(cfg)
    gen_calls = 0
    if crit_path is None:
        crit, _, gen_calls = _generate(cfg, dataset, backend)
        out.mkdir(parents=True, exist_ok=True)
        crit_path = out / "criteria.json"
        crit.save(crit_path)
    config = EvaluationConfig(
        in_flight=int(cfg["in_flight"]),
        requests_per_minute=cfg["requests_per_minute"],
        literal_scale=bool(cfg["literal_scale"]),
        progress=not cfg["quiet"],
    )
    cache = _open_cache(cfg)
    state_dir = None if cfg["dry_run"] else cfg["state_dir"]
    if cfg["resume"]:
        if state_dir is None:
            raise UsageError("--resume cannot be combined with --dry-run")
        result = resume(cfg["resume"], state_dir, backend, cache=cache, dataset=dataset, criteria=crit, config=config)
    else:
        result = run_evaluation(
            dataset, crit, backend, config, cache=cache, state_dir=state_dir,
            dataset_path=Path(cfg["dataset"]).resolve(), criteria_path=crit_path.resolve(),
        )
    k = len(crit)
    doc: dict[str, Any] = {
        "command": "evaluate",
        "method": "ahp",
        "run_id": result.run.run_id,
        "backend": {"id": backend.backend_id, "model": backend.model_id},
        "criteria": list(crit.criteria),
        "criteria_provenance": crit.provenance,
        "weights": ahp.criteria_weights(k).weights.tolist(),
        "scores": result.scores.as_dict(),
        "ranking": list(result.scores.ranking),
        "judgments": request_count("ahp", dataset.n, k),
        "backend_calls": result.run.fresh_calls + gen_calls,
        "judgment_distribution": judgment_distribution(result.records),
        "config": _provenance(cfg),
    }
    line = _scores_with_metrics(doc, dataset, cfg)
    json_path, csv_path = export_report(doc, out, stem="report")
    _echo(
        f"run {result.run.run_id}: {doc['judgments']} judgments over {k} criteria",
        f"{doc['backend_calls']} backend calls",
        line,
        f"report: {json_path}",
        f"histogram: {csv_path}",
    )
    return EXIT_OK


def cmd_baseline(cfg: dict[str, Any]) -> int:
    method = cfg["method"]
    if method not in METHODS:
        raise UsageError(f"--method must be one of {', '.join(METHODS)}")
    dataset = _load_dataset(cfg)
    definitions = None
    if cfg["cefr_definitions"]:
        path = _require_file(cfg, "cefr_definitions", "CEFR definitions")
        try:
            definitions = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid CEFR definitions {path}: {exc}") from exc
    if method == "cefr-level" and not dataset.is_essay:
        raise UnsupportedDatasetError("the CEFR baseline only applies to essay datasets graded by level")
    backend = make_backend(cfg)
    res = run_baseline(
        method, dataset, backend, cache=_open_cache(cfg), in_flight=int(cfg["in_flight"]), definitions=definitions
    )
    doc = res.to_json()
    doc.update({
        "command": "baseline",
        "backend": {"id": backend.backend_id, "model": backend.model_id},
        "judgments": request_count(method, dataset.n),
        "config": _provenance(cfg),
    })
    if res.records:
        doc["judgment_distribution"] = judgment_distribution(res.records)
    line = _scores_with_metrics(doc, dataset, cfg)
    stem = "baseline_" + method.replace("-", "_")
    json_path, csv_path = export_report(doc, cfg["out"], stem=stem, levels=res.levels)
    _echo(f"{method}: {doc['judgments']} judgments", f"{res.fresh_calls} backend calls", line,
          f"report: {json_path}", f"histogram: {csv_path}")
    return EXIT_OK


def cmd_metrics(cfg: dict[str, Any]) -> int:
    dataset = _load_dataset(cfg)
    if dataset.ground_truth is None:
        raise DatasetError("dataset has no ground truth to score against", cfg["dataset"])
    path = _require_file(cfg, "scores", "scores or report file")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from exc
    scores = doc.get("scores", doc) if isinstance(doc, dict) else None
    if not isinstance(scores, dict):
        raise DatasetError("expected a mapping of response id to score", str(path))
    missing = sorted(set(dataset.ids) - set(scores))
    if missing:
        raise DatasetError(f"no score for {len(missing)} responses (first: {missing[0]})", str(path))
    try:
        scores = {rid: float(scores[rid]) for rid in dataset.ids}
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"non-numeric score: {exc}", str(path)) from exc
    rep = evaluate_scores(scores, dataset.ground_truth, gap=cfg["sci_gap"])
    result = {"command": "metrics", "scores_file": str(path), **rep.to_json(), "config": _provenance(cfg)}
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    sci = "n/a" if rep.sci is None else f"{rep.sci:.4f}"
    _echo(f"CI {rep.ci:.4f}  sCI {sci}  (gap {rep.gap:g})", "0 backend calls")
    return EXIT_OK


def parse_sizes(text: str | Sequence[int] | None, k: int) -> list[int]:
    if text is None:
        return list(range(1, k + 1))
    if isinstance(text, (list, tuple)):
        parts = [int(x) for x in text]
    else:
        parts = []
        for tok in str(text).split(","):
            tok = tok.strip()
            try:
                if "-" in tok:
                    lo, hi = (int(x) for x in tok.split("-", 1))
                    parts.extend(range(lo, hi + 1))
                elif tok:
                    parts.append(int(tok))
            except ValueError as exc:
                raise UsageError(f"invalid --sizes entry {tok!r}") from exc
    bad = [s for s in parts if not 1 <= s <= k]
    if bad or not parts:
        raise UsageError(f"subset sizes must lie in 1..{k}; got {bad or 'none'}")
    return sorted(set(parts))


def cmd_ablate(cfg: dict[str, Any]) -> int:
    dataset = _load_dataset(cfg)
    if dataset.ground_truth is None:
        raise DatasetError("ablation needs ground truth", cfg["dataset"])
    crit = load_criteria(_require_file(cfg, "criteria", "criteria file"))
    sizes = parse_sizes(cfg["sizes"], len(crit))
    literal = bool(cfg["literal_scale"])
    if cfg["run_id"]:
        run = load_run(cfg["run_id"], cfg["state_dir"])
        backend_id, model_id = run.backend_id, run.model_id
        literal = bool(run.config.get("literal_scale", literal))
    else:
        backend = make_backend(cfg)
        backend_id, model_id = backend.backend_id, backend.model_id
    if not cfg["cache"] or not Path(cfg["cache"]).exists():
        raise IncompleteTensorError(request_count("ahp", dataset.n, len(crit)), request_count("ahp", dataset.n, len(crit)))
    tensor, _ = load_cached_tensor(dataset, crit, backend_id, model_id, JudgmentCache(cfg["cache"]), literal=literal)
    rows = ahp.criterion_scores(tensor)
    results = [
        criteria_ablation(tensor, dataset.ground_truth, j, ids=dataset.ids, max_subsets=int(cfg["max_subsets"]),
                          seed=int(cfg["seed"]), rows=rows)
        for j in sizes
    ]
    out = Path(cfg["out"])
    csv_path = write_csv(out / "ablation.csv", ABLATION_CSV_HEADER, [r.csv_row() for r in results])
    doc = {
        "command": "ablate",
        "backend": {"id": backend_id, "model": model_id},
        "criteria": list(crit.criteria),
        "results": [r.to_json() for r in results],
        "backend_calls": 0,
        "config": _provenance(cfg),
    }
    (out / "ablation.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for r in results:
        s = r.stats
        _echo(f"size {r.subset_size}: {len(r.subsets)} subsets, CI min {s['min']:.4f} median {s['median']:.4f} max {s['max']:.4f}")
    _echo("0 backend calls", f"ablation: {csv_path}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file of defaults; flags override it")
    p.add_argument("--dataset", default=S, help="dataset JSON (never modified)")
    p.add_argument("--out", default=S, help="output directory (default: out)")
    p.add_argument("--cache", default=S, help="judgment cache JSONL (default: <out>/cache.jsonl)")
    p.add_argument("--state-dir", default=S, help="run state directory (default: <out>/runs)")
    p.add_argument("--in-flight", type=int, default=S, help="concurrent backend requests (default: 4)")
    p.add_argument("--requests-per-minute", type=float, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--sci-gap", type=float, default=S, help="truth gap for a pair to count as significant")
    b = p.add_argument_group("backend")
    b.add_argument("--backend", choices=("llm", "oracle", "fixture"), default=S)
    b.add_argument("--model", default=S)
    b.add_argument("--base-url", default=S, help="OpenAI-compatible endpoint for --backend llm")
    b.add_argument("--timeout", type=float, default=S)
    b.add_argument("--oracle-profile", default=S)
    b.add_argument("--fixtures", default=S, help="fixtures.json or a directory holding it")
    b.add_argument("--delta-big", type=float, default=S, help="oracle margin for a strong preference")
    b.add_argument("--delta-small", type=float, default=S, help="oracle margin below which it answers tie")
    b.add_argument("--dry-run", action="store_true", default=S, help="constant backend; counts requests only")
    p.add_argument("--quiet", action="store_true", default=S, help="no progress on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ahp-eval", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    g = sub.add_parser("gen-criteria", help="derive ranked criteria from sampled pairs")
    _common(g)
    g.add_argument("--criteria", default=S, help="existing criteria file; skips generation")
    g.add_argument("--m", type=int, default=S, help="responses sampled (default: 10)")
    g.add_argument("--k", type=int, default=S, help="criteria kept (default: 10)")
    g.set_defaults(func=cmd_gen_criteria)

    e = sub.add_parser("evaluate", help="score every response with multi-criteria AHP")
    _common(e)
    e.add_argument("--criteria", default=S, help="criteria file; generated when omitted")
    e.add_argument("--m", type=int, default=S)
    e.add_argument("--k", type=int, default=S)
    e.add_argument("--literal-scale", action="store_true", default=S, help="non-reciprocal judgment values")
    e.add_argument("--resume", metavar="RUN_ID", default=S)
    e.set_defaults(func=cmd_evaluate)

    bl = sub.add_parser("baseline", help="run a comparison method")
    _common(bl)
    bl.add_argument("--method", choices=METHODS, default=S, required=True)
    bl.add_argument("--cefr-definitions", default=S, help="JSON object of level label to description")
    bl.set_defaults(func=cmd_baseline)

    mt = sub.add_parser("metrics", help="CI and sCI of a scores file against ground truth")
    _common(mt)
    mt.add_argument("--scores", default=S, required=True, help="report JSON or bare id-to-score mapping")
    mt.set_defaults(func=cmd_metrics)

    ab = sub.add_parser("ablate", help="CI over criteria subsets from a cached tensor")
    _common(ab)
    ab.add_argument("--criteria", default=S, required=True)
    ab.add_argument("--sizes", default=S, help="e.g. 1-10 or 2,3,5 (default: 1..k)")
    ab.add_argument("--max-subsets", type=int, default=S)
    ab.add_argument("--run-id", default=S, help="take backend identity from this run's state")
    ab.add_argument("--literal-scale", action="store_true", default=S)
    ab.set_defaults(func=cmd_ablate)
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UnsupportedDatasetError):
        return EXIT_UNSUPPORTED
    if isinstance(exc, IncompleteTensorError):
        return EXIT_INCOMPLETE
    if isinstance(exc, (ConfigError, ConfigMismatchError, UnknownRunError)):
        return EXIT_CONFIG
    if isinstance(exc, BackendError):
        return EXIT_BACKEND
    if isinstance(exc, (AHPEvalError, CacheCorruptError)):
        return EXIT_VALIDATION
    return EXIT_UNEXPECTED


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(cfg)
    except AHPEvalError as exc:
        code = exit_code_for(exc)
        print(f"ahp-eval: error: {exc}", file=sys.stderr)
        if code == EXIT_CONFIG and isinstance(exc, UsageError):
            parser.print_usage(sys.stderr)
        return code
    except KeyboardInterrupt:
        print("ahp-eval: interrupted; rerun with --resume RUN_ID to continue", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
