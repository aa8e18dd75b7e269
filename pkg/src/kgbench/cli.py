"""``kgbench`` command line.

Subcommands: ``fetch``, ``stats``, ``split``, ``train``, ``eval``, ``grid``.
Settings come from an optional JSON config (``--config``); flags given on
the command line win. Each command except ``fetch`` writes into a run
directory (``--out``, default ``runs/<timestamp>-<config digest>/``) holding
a copy of the resolved config and every artifact it produced. Artifacts
carry the config digest, dataset digest, seed and tool version.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__

log = logging.getLogger("kgbench")

DEFAULTS = {
    "triples": None,
    "views": None,
    "type_map": None,
    "header": False,
    "view": "whole",
    "model": "TransE",
    "dim": 512,
    "norm": None,
    "init_scale": 1e-3,
    "batch_size": 512,
    "learning_rate": 1e-3,
    "negative_ratio": 50,
    "margin": 0.0,
    "max_epochs": 1000,
    "patience": 5,
    "loss": "auto",
    "optimizer": "auto",
    "corrupt": "tail",
    "eval_mode": "type-truth",
    "seed": 0,
    "holdout_fraction": 0.2,
    "min_component_size": 10,
    "split_dir": None,
    "embeddings": None,
    "grid": None,
    "format": "table",
    "threads": None,
    "out": None,
}
# keys that do not change what a command computes
_NOT_DIGESTED = ("out", "threads", "format")
_TRAIN_KEYS = ("batch_size", "learning_rate", "negative_ratio", "margin", "max_epochs", "patience",
               "loss", "optimizer", "corrupt", "eval_mode", "seed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ratio(text: str):
    if text.lower() in ("none", "null", "full"):
        return None
    return int(text)


def _norm(text: str):
    return None if text.lower() in ("none", "default") else int(text)


def _view_file(text: str):
    tag, sep, path = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected TAG=PATH")
    return tag, path


def _int_list(text):
    return [int(x) for x in text.split(",")]


def _float_list(text):
    return [float(x) for x in text.split(",")]


def _ratio_list(text):
    return [_ratio(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = _Parser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON run config; flags override it")
    common.add_argument("--out", help="run directory (default runs/<timestamp>-<digest>)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="BLAS/OpenMP threads (set before numpy loads)")
    common.add_argument("-v", "--verbose", action="store_true")

    data = _Parser(add_help=False, argument_default=S)
    data.add_argument("triples", nargs="?", help="triple file (head, relation, tail[, view])")
    data.add_argument("--view-file", dest="views", action="append", type=_view_file, metavar="TAG=PATH",
                      help="load a per-view file (repeatable); alternative to TRIPLES")
    data.add_argument("--type-map", dest="type_map")
    data.add_argument("--header", action="store_true", help="skip one header line per file")
    data.add_argument("--view", choices=["ontology", "instance", "bridge", "whole"])

    split_opts = _Parser(add_help=False, argument_default=S)
    split_opts.add_argument("--fraction", dest="holdout_fraction", type=float)
    split_opts.add_argument("--min-component-size", dest="min_component_size", type=int)
    split_opts.add_argument("--split-dir", dest="split_dir", help="use train/valid/test.txt from a previous split")

    model = _Parser(add_help=False, argument_default=S)
    model.add_argument("--model")
    model.add_argument("--dim", type=int)
    model.add_argument("--norm", type=_norm)
    model.add_argument("--init-scale", dest="init_scale", type=float)
    model.add_argument("--eval-mode", dest="eval_mode", choices=["raw", "type", "type-truth"])

    train = _Parser(add_help=False, argument_default=S)
    train.add_argument("--batch-size", dest="batch_size", type=int)
    train.add_argument("--lr", dest="learning_rate", type=float)
    train.add_argument("--neg-ratio", dest="negative_ratio", type=_ratio, help="integer, or 'none' for full softmax")
    train.add_argument("--margin", type=float)
    train.add_argument("--max-epochs", dest="max_epochs", type=int)
    train.add_argument("--patience", type=int)
    train.add_argument("--loss", choices=["auto", "bce", "nll"])
    train.add_argument("--optimizer", choices=["auto", "adam", "sparse_adam"])
    train.add_argument("--corrupt", choices=["tail", "both"])

    p = _Parser(prog="kgbench", description="Knowledge-graph embedding benchmark.")
    p.add_argument("--version", action="version", version=f"kgbench {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fetch", parents=[common], help="download a release file into the cache")
    f.add_argument("url")
    f.add_argument("--digest", help="expected SHA-256 hex")
    f.add_argument("--filename")
    f.add_argument("--cache-dir", dest="cache_dir", help="default $KGE_CACHE or ~/.cache/kgbench")

    st = sub.add_parser("stats", parents=[common, data], help="per-category node/edge counts")
    st.add_argument("--format", choices=["table", "json"], default=S)

    sub.add_parser("split", parents=[common, data, split_opts], help="connectivity-preserving split")
    sub.add_parser("train", parents=[common, data, split_opts, model, train], help="train one model")
    ev = sub.add_parser("eval", parents=[common, data, split_opts, model], help="rank the test split")
    ev.add_argument("--embeddings", help="model.bin produced by train")
    ev.add_argument("--format", choices=["table", "json"], default=S)
    ev.add_argument("--valid", action="store_true", default=S, help="evaluate on the validation split")
    g = sub.add_parser("grid", parents=[common, data, split_opts, model, train], help="beam search over the grid")
    g.add_argument("--grid-batch-sizes", dest="grid_batch_size", type=_int_list, default=S)
    g.add_argument("--grid-lrs", dest="grid_learning_rate", type=_float_list, default=S)
    g.add_argument("--grid-neg-ratios", dest="grid_negative_ratio", type=_ratio_list, default=S)
    return p


# ---------------------------------------------------------------------------
# Config resolution


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"{path}: unknown config keys {unknown}")
    return data


def resolve_config(args: argparse.Namespace) -> dict:
    ns = vars(args).copy()
    cfg = dict(DEFAULTS)
    cfg.update(_read_config(ns.pop("config", None)))
    grid = {k[5:]: ns.pop(k) for k in list(ns) if k.startswith("grid_")}
    for key in ("command", "verbose", "url", "digest", "filename", "cache_dir", "valid"):
        ns.pop(key, None)
    if "views" in ns:
        ns["views"] = dict(ns["views"])
    cfg.update(ns)
    if grid:
        cfg["grid"] = {**(cfg.get("grid") or {}), **grid}
    return cfg


def config_digest(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in _NOT_DIGESTED}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def provenance(cfg: dict, dataset_digest: str) -> dict:
    return {"config_digest": config_digest(cfg), "dataset_digest": dataset_digest,
            "seed": cfg["seed"], "tool_version": __version__}


def _run_dir(cfg: dict) -> Path:
    if cfg.get("out"):
        out = Path(cfg["out"])
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = Path("runs") / f"{stamp}-{config_digest(cfg)[:8]}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _save_config(out: Path, cfg: dict, prov: dict) -> None:
    _write_json(out / "config.json", {**cfg, "provenance": prov})


def _comment(prov: dict) -> str:
    return "# kgbench {tool_version} config={config_digest} dataset={dataset_digest} seed={seed}\n".format(**prov)


# ---------------------------------------------------------------------------
# Commands


def _load(cfg: dict, *, allow_empty: bool = False):
    from .triple_store import load_triples, load_views, view_filter

    if cfg.get("views"):
        kg = load_views(cfg["views"], cfg.get("type_map"), header=cfg["header"])
    elif cfg.get("triples"):
        kg = load_triples(cfg["triples"], cfg.get("type_map"), header=cfg["header"], allow_empty=allow_empty)
    else:
        raise UsageError("no dataset given (TRIPLES argument, --view-file, or 'triples' in the config)")
    if cfg.get("view") and cfg["view"] != "whole":
        kg = view_filter(kg, cfg["view"])
    return kg


def _read_split_dir(kg, directory):
    """Rebuild a split from files written by ``split`` (labels must exist in ``kg``)."""
    import numpy as np

    from .errors import LoadError
    from .splitter import SplitDataset

    directory = Path(directory)
    manifest = {}
    if (directory / "split_manifest.json").exists():
        manifest = json.loads((directory / "split_manifest.json").read_text(encoding="utf-8"))
    parts = {}
    for part in ("train", "valid", "test", "excluded"):
        path = directory / f"{part}.txt"
        if not path.exists():
            if part == "excluded":
                parts[part] = np.zeros((0, 3), dtype=np.int64)
                continue
            raise LoadError(f"no such file: {path}")
        rows = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise LoadError(f"{path}:{lineno}: expected 3 columns")
            h, r, t = cols
            if h not in kg.entities or t not in kg.entities or r not in kg.relations:
                raise LoadError(f"{path}:{lineno}: triple not in the dataset")
            rows.append((kg.entities.index_of(h), kg.relations.index_of(r), kg.entities.index_of(t)))
        parts[part] = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return SplitDataset(parts["train"], parts["valid"], parts["test"], parts["excluded"],
                        manifest.get("seed", 0), manifest.get("holdout_fraction", float("nan")),
                        manifest.get("min_component_size", 0))


def _get_split(cfg: dict, kg):
    from .splitter import split

    if cfg.get("split_dir"):
        return _read_split_dir(kg, cfg["split_dir"])
    return split(kg, cfg["holdout_fraction"], cfg["min_component_size"], seed=cfg["seed"])


def _model_spec(cfg: dict):
    from .models import ModelSpec, get_model

    spec = ModelSpec(cfg["model"], cfg["dim"], cfg["norm"], cfg["init_scale"])
    get_model(spec)  # validates name and dimension
    return spec


def _train_config(cfg: dict):
    from .training import TrainConfig

    return TrainConfig(**{k: cfg[k] for k in _TRAIN_KEYS})


def cmd_fetch(args) -> int:
    from .triple_store import fetch_dataset

    path = fetch_dataset(args.url, getattr(args, "cache_dir", None), getattr(args, "digest", None),
                         getattr(args, "filename", None))
    print(path)
    return 0


def cmd_stats(cfg: dict) -> int:
    from .triple_store import stats

    kg = _load(cfg, allow_empty=True)
    rep = stats(kg)
    out = _run_dir(cfg)
    prov = provenance(cfg, kg.digest())
    _save_config(out, cfg, prov)
    _write_json(out / "stats.json", {**rep.to_dict(), "provenance": prov})
    (out / "stats.txt").write_text(_comment(prov) + rep.to_table() + "\n", encoding="utf-8")
    print(json.dumps(rep.to_dict(), indent=2, sort_keys=True) if cfg["format"] == "json" else rep.to_table())
    return 0


def cmd_split(cfg: dict) -> int:
    from .splitter import split, write_split

    kg = _load(cfg)
    ds = split(kg, cfg["holdout_fraction"], cfg["min_component_size"], seed=cfg["seed"])
    out = _run_dir(cfg)
    prov = provenance(cfg, kg.digest())
    _save_config(out, cfg, prov)
    write_split(ds, kg, out, extra={"provenance": prov})
    sizes = ds.sizes()
    print(" ".join(f"{k}={v}" for k, v in sizes.items()))
    return 0


def cmd_train(cfg: dict) -> int:
    from .persistence import save_embeddings
    from .training import fit

    kg = _load(cfg)
    spec, tcfg = _model_spec(cfg), _train_config(cfg)
    ds = _get_split(cfg, kg)
    out = _run_dir(cfg)
    prov = provenance(cfg, kg.digest())
    _save_config(out, cfg, prov)
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"provenance": prov}, sort_keys=True) + "\n")

        def on_epoch(rec):
            fh.write(rec.to_json() + "\n")
            log.info("epoch %d loss %.5f val_mrr %.4f (%.2fs)", rec.epoch, rec.loss, rec.val_mrr, rec.seconds)

        tm = fit(ds, kg, spec, tcfg, on_epoch=on_epoch)
        fh.write(json.dumps({"best_epoch": tm.best_epoch, "stopping_epoch": tm.stopping_epoch,
                             "best_val_mrr": tm.best_val_mrr}, sort_keys=True) + "\n")
    save_embeddings(out / "model.bin", tm.params, kg, norm=spec.norm,
                    extra={"provenance": prov, "train_config": tcfg.to_dict(), "best_epoch": tm.best_epoch})
    print(f"best epoch {tm.best_epoch} (stopped at {tm.stopping_epoch}), val MRR {tm.best_val_mrr:.4f}; wrote {out / 'model.bin'}")
    return 0


def cmd_eval(cfg: dict, on_valid: bool = False) -> int:
    from .evaluation import RankingContext, evaluate, report
    from .models import ModelSpec, get_model
    from .persistence import load_embeddings

    if not cfg.get("embeddings"):
        raise UsageError("eval needs --embeddings (a model.bin written by train)")
    kg = _load(cfg)
    P, header = load_embeddings(cfg["embeddings"], kg)
    model = get_model(ModelSpec(header["model"], header["dim"], header["norm"]))
    ds = _get_split(cfg, kg)
    target = ds.valid if on_valid else ds.test
    ctx = RankingContext.from_split(kg, ds)
    metrics = evaluate(model, P, target, ctx, cfg["eval_mode"])
    out = _run_dir(cfg)
    prov = provenance({**cfg, "model": header["model"], "dim": header["dim"]}, kg.digest())
    _save_config(out, cfg, prov)
    _write_json(out / "metrics.json", {**metrics.to_dict(), "split": "valid" if on_valid else "test",
                                       "provenance": prov, "embeddings_sha256": _sha(cfg["embeddings"])})
    table = report(metrics, "table", breakdown=True)
    (out / "metrics.txt").write_text(_comment(prov) + table + "\n", encoding="utf-8")
    print(report(metrics, "json") if cfg["format"] == "json" else table)
    return 0


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_grid(cfg: dict) -> int:
    from .training import BENCHMARK_GRID, grid_search

    kg = _load(cfg)
    spec, base = _model_spec(cfg), _train_config(cfg)
    ds = _get_split(cfg, kg)
    grid = cfg.get("grid") or BENCHMARK_GRID
    unknown = set(grid) - set(BENCHMARK_GRID)
    if unknown:
        raise UsageError(f"unknown grid keys {sorted(unknown)}")
    results = grid_search(ds, kg, spec, grid, base)
    out = _run_dir(cfg)
    prov = provenance(cfg, kg.digest())
    _save_config(out, cfg, prov)
    rows = [{"rank": i + 1, **r.to_dict()} for i, r in enumerate(results)]
    _write_json(out / "grid.json", {"results": rows, "provenance": prov})
    lines = [f"{'Rank':>4}  {'Stage':<15}{'Batch':>7}{'LR':>10}{'Neg':>6}{'Val MRR':>10}"]
    for row in rows:
        ratio = "full" if row["negative_ratio"] is None else str(row["negative_ratio"])
        lines.append(f"{row['rank']:>4}  {row['stage']:<15}{row['batch_size']:>7}{row['learning_rate']:>10.4g}"
                     f"{ratio:>6}{row['val_mrr']:>10.4f}")
    text = "\n".join(lines)
    (out / "grid.txt").write_text(_comment(prov) + text + "\n", encoding="utf-8")
    print(text)
    return 0


def _apply_threads(n) -> None:
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    if "numpy" in sys.modules:
        log.debug("numpy already loaded; --threads may not take effect")


def main(argv=None) -> int:
    from .errors import KGBenchError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "fetch":
            return cmd_fetch(args)
        cfg = resolve_config(args)
        _apply_threads(cfg.get("threads"))
        if args.command == "stats":
            return cmd_stats(cfg)
        if args.command == "split":
            return cmd_split(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, on_valid=getattr(args, "valid", False))
        return cmd_grid(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KGBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError, KeyError) as exc:
        # bad values that got past argparse (e.g. unknown model, odd dim)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
