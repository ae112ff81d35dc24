"""INI run configuration.

Every recognized key and its default::

    [run]
    seed = 0                  master seed of the run
    seeds = 10                seed count for multi-seed protocols (seeds 0..N-1)

    [dataset]
    source = sbm              "sbm" or "path"
    path =                    directory with graph.edges/.features/.labels/.masks
    n = 800                   SBM nodes
    classes = 4               SBM blocks
    p_in = 0.03               intra-block edge probability
    p_out = 0.0067            inter-block edge probability
    dim = 32                  feature dimension
    signal = 1.5              class-prototype scale against unit noise
    train_frac = 0.1
    val_frac = 0.1

    [noise]                   fraction per kind, applied in this order
    edge_add = 0.0
    edge_delete = 0.0
    feature_mask = 0.0
    label_flip = 0.0

    [gsl]
    method = metric_knn       "metric_knn" or "similarity_residual"
    k = 10
    alpha = 0.5               metric_knn mixing weight of the kNN graph
    lam = 0.0                 regularizer weight
    regularizers =            comma list of l1_sparsity, smoothness
    encoder_hidden = 64
    similarity =              inner_product or cosine; empty picks the method default
    encoder_lr =              empty uses the training learning rate

    [ungsl]
    tau = 2.0
    beta = 0.5
    eps_lr = 0.01
    eps_init_low = 0.0
    eps_init_high = 1.0
    uncertainty = entropy     "entropy" or "contrastive"
    fixed_fraction =          empty keeps thresholds learnable
    symmetrize = false

    [train]
    epochs = 200
    lr = 0.01
    weight_decay = 5e-4
    dropout = 0.5
    patience = 100
    hidden = 64

    [experiment]
    values = 1,2,3            sweep values
    ratios = 0,0.1,0.2,0.3    prune ratios
    levels = 0,0.2,0.4        robustness noise levels
    noise_kind = edge_add     robustness / level-sweep noise kind
    fixed_fraction = 0.3      fixed-threshold ablation quantile
    sizes = 800,1600,2400,3200  SBM sizes for reweight-cost scaling
    overhead_epochs = 100
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .gnn import TrainConfig
from .gsl import GslConfig
from .harness.experiments import RunSpec
from .harness.sbm import SbmConfig
from .reweight import UnGslConfig


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _names(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _opt_float(text):
    return None if text.strip() == "" else float(text)


def _opt_str(text):
    return None if text.strip() == "" else text.strip()


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA = {
    "run": {"seed": (int, "0"), "seeds": (int, "10")},
    "dataset": {
        "source": (str, "sbm"), "path": (str, ""), "n": (int, "800"), "classes": (int, "4"),
        "p_in": (float, "0.03"), "p_out": (float, "0.0067"), "dim": (int, "32"),
        "signal": (float, "1.5"), "train_frac": (float, "0.1"), "val_frac": (float, "0.1"),
    },
    "noise": {k: (float, "0.0") for k in ("edge_add", "edge_delete", "feature_mask", "label_flip")},
    "gsl": {
        "method": (str, "metric_knn"), "k": (int, "10"), "alpha": (float, "0.5"),
        "lam": (float, "0.0"), "regularizers": (_names, ""), "encoder_hidden": (int, "64"),
        "similarity": (_opt_str, ""), "encoder_lr": (_opt_float, ""),
    },
    "ungsl": {
        "tau": (float, "2.0"), "beta": (float, "0.5"), "eps_lr": (float, "0.01"),
        "eps_init_low": (float, "0.0"), "eps_init_high": (float, "1.0"),
        "uncertainty": (str, "entropy"), "fixed_fraction": (_opt_float, ""),
        "symmetrize": (_bool, "false"),
    },
    "train": {
        "epochs": (int, "200"), "lr": (float, "0.01"), "weight_decay": (float, "5e-4"),
        "dropout": (float, "0.5"), "patience": (int, "100"), "hidden": (int, "64"),
    },
    "experiment": {
        "values": (_floats, "1,2,3"), "ratios": (_floats, "0,0.1,0.2,0.3"),
        "levels": (_floats, "0,0.2,0.4"), "noise_kind": (str, "edge_add"),
        "fixed_fraction": (float, "0.3"), "sizes": (_floats, "800,1600,2400,3200"),
        "overhead_epochs": (int, "100"),
    },
}


@dataclass
class RunConfig:
    spec: RunSpec
    seed: int
    seeds: tuple
    experiment: dict
    values: dict


def parse_values(parser):
    """Validate sections/keys against :data:`SCHEMA`; returns typed values with defaults."""
    unknown = [s for s in parser.sections() if s not in SCHEMA]
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    out = {}
    for section, keys in SCHEMA.items():
        given = dict(parser.items(section)) if parser.has_section(section) else {}
        bad = [k for k in given if k not in keys]
        if bad:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(bad)}")
        out[section] = {}
        for key, (conv, default) in keys.items():
            raw = given.get(key, default)
            try:
                out[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    return out


def build(values):
    ds, g, u, t = values["dataset"], values["gsl"], values["ungsl"], values["train"]
    try:
        if ds["source"] == "sbm":
            dataset = SbmConfig(n=ds["n"], K=ds["classes"], p_in=ds["p_in"], p_out=ds["p_out"],
                                d=ds["dim"], signal=ds["signal"], train_frac=ds["train_frac"],
                                val_frac=ds["val_frac"])
        elif ds["source"] == "path":
            if not ds["path"]:
                raise ConfigError("[dataset] source = path needs a path")
            dataset = ds["path"]
        else:
            raise ConfigError(f"unknown dataset source {ds['source']!r}")
        noise = tuple((k, v) for k, v in values["noise"].items() if v > 0)
        gsl = GslConfig(method=g["method"], k=g["k"], alpha=g["alpha"], lam=g["lam"],
                        regularizers=g["regularizers"], encoder_hidden=g["encoder_hidden"],
                        similarity=g["similarity"], encoder_lr=g["encoder_lr"])
        ungsl = UnGslConfig(tau=u["tau"], beta=u["beta"], eps_lr=u["eps_lr"],
                            eps_init_low=u["eps_init_low"], eps_init_high=u["eps_init_high"])
        train = TrainConfig(**t)
        if u["uncertainty"] not in ("entropy", "contrastive"):
            raise ConfigError(f"unknown uncertainty source {u['uncertainty']!r}")
        spec = RunSpec(dataset, noise, gsl, ungsl, train, True, u["fixed_fraction"],
                       u["symmetrize"], u["uncertainty"])
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    run = values["run"]
    if run["seeds"] < 1:
        raise ConfigError("[run] seeds must be >= 1")
    return RunConfig(spec, run["seed"], tuple(range(run["seeds"])), values["experiment"], values)


def load(path=None):
    """Read and validate an INI file; ``None`` gives all defaults."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return build(parse_values(parser))


def default_text():
    """An INI file spelling out every default."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {d}" for k, (_, d) in keys.items())
        lines.append("")
    return "\n".join(lines)
