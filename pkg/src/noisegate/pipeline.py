"""End-to-end orchestration.

ingest -> split -> detector board -> ensemble arbitration -> opt-out
signature -> removal -> retrain -> before/after evaluation.  Every stage
persists its output under the run directory, so any stage can be re-run
from the artifacts of the previous one and still produce the same final
report.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .board import BoardConfig, BoardResult, read_votes, run_board, write_votes
from .board.verdict import DETECTOR_IDS, Consensus, Verdict, VoteSet
from .dataset import (
    GenreMap,
    RatingsTable,
    Scale,
    SplitSpec,
    filter_min_activity,
    load_genres,
    load_ratings,
    split_train_test,
)
from .ensemble import (
    VARIANTS,
    EnsembleConfig,
    classify_uncertain,
    read_classification,
    train_el,
    write_classification,
)
from .ensemble.features import build_feature_matrix, read_features, write_features
from .evaluation import (
    ACCURACY_METRICS,
    BASIS_RATINGS,
    BASIS_USERS,
    DeltaReport,
    UserEval,
    cluster_users,
    critical_groups,
    delta_points,
    ranking_metrics,
    serendipity,
    write_delta_csv,
    write_scatter_svg,
)
from .evaluation.serendipity import FORMULA_COMPLEMENT, FORMULA_PAPER_LITERAL
from .ioutil import dump_json, read_json
from .recsys import KnnConfig, MfModel, mf_train, recommend_topk, save_model
from .seeding import derive_seed
from .signature import (
    DENOMINATOR_GLOBAL_NOISE,
    DENOMINATOR_LAST_DAY,
    SignatureAction,
    SignatureHit,
    apply_signature_action,
    detect_optout,
    read_hits,
    utc_day,
    write_hits,
)

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """Invalid configuration (exit code 2)."""


class DataError(Exception):
    """Unreadable or unusable data (exit code 3)."""


class StageError(Exception):
    """A pipeline stage failed (exit code 4); carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# Seed salts: each consumer of randomness derives its own stream from the
# one configured seed, so stages stay independent and reproducible.
_SALT_SPLIT_EVAL = 11
_SALT_SPLIT_DETECT = 12
_SALT_ENSEMBLE = 13
_SALT_MF = 21
_SALT_CLUSTER = 31
_SALT_INJECT = {"uniform": 41, "flip": 42, "optout": 43}


@dataclass(frozen=True)
class PipelineConfig:
    """Flat, fully defaulted configuration for a pipeline run."""

    ratings_path: str = ""
    movies_path: str | None = None
    out_dir: str = "out"
    run_id: str | None = None
    mask_path: str | None = None

    scale_min: float = 0.5
    scale_max: float = 5.0
    min_activity: int = 50
    activity_by: str = "user"

    train_fraction: float = 0.7
    detect_fraction: float = 0.15
    eval_fraction: float = 0.15

    nf1_cut_low: float = 2.5
    nf1_cut_high: float = 4.0
    nf1_majority: float = 0.5
    nf2_theta_heavy_medium: float = 0.075
    nf2_theta_light: float = 0.05
    nf2_rnd_cut: float = 0.5
    nf2_coherence_cut: float = 0.8
    nf3_k: int = 35
    nf3_min_overlap: int = 2
    nf3_significance_cap: int = 50
    nf3_th: float = 0.05
    nf4_delta1: float = 1.0
    nf4_delta2: float = 0.25

    ensemble_variant: str = "EL3"
    rf_trees: int = 100
    rf_max_depth: int = 8
    rf_feature_subset: int | None = None
    gbt_rounds: int = 100
    gbt_depth: int = 3
    gbt_lr: float = 0.1
    ressel_bags: int = 25
    ressel_add_per_round: int = 10
    ressel_max_rounds: int = 20
    eif_trees: int = 100
    eif_sample_size: int = 256
    eif_extension_level: int | None = None
    eif_score_cut: float = 0.8

    signature_threshold: float = 0.5
    signature_action: str = "remove_user"
    signature_denominator: str = DENOMINATOR_LAST_DAY

    mf_factors: int = 16
    mf_epochs: int = 20
    mf_lr: float = 0.01
    mf_reg: float = 0.02

    clusters_k: int = 20
    top_k: int = 10
    plane_a: float = 0.07
    plane_b: float = 0.17
    serendipity_formula: str = FORMULA_COMPLEMENT
    relevance_threshold: float = 3.5
    percent_basis: str = BASIS_USERS

    seed: int = 0

    # -- derived sub-configs -------------------------------------------

    def scale(self) -> Scale:
        return Scale(self.scale_min, self.scale_max)

    def board_config(self) -> BoardConfig:
        return BoardConfig(
            nf1_cuts=(self.nf1_cut_low, self.nf1_cut_high),
            nf1_majority=self.nf1_majority,
            nf2_theta_heavy_medium=self.nf2_theta_heavy_medium,
            nf2_theta_light=self.nf2_theta_light,
            nf2_rnd_cut=self.nf2_rnd_cut,
            nf2_coherence_cut=self.nf2_coherence_cut,
            nf3_knn=KnnConfig(self.nf3_k, self.nf3_min_overlap, self.nf3_significance_cap),
            nf3_th=self.nf3_th,
            nf4_delta1=self.nf4_delta1,
            nf4_delta2=self.nf4_delta2,
        )

    def ensemble_config(self) -> EnsembleConfig:
        return EnsembleConfig(
            variant=self.ensemble_variant,
            rf_trees=self.rf_trees,
            rf_max_depth=self.rf_max_depth,
            rf_feature_subset=self.rf_feature_subset,
            gbt_rounds=self.gbt_rounds,
            gbt_depth=self.gbt_depth,
            gbt_lr=self.gbt_lr,
            ressel_bags=self.ressel_bags,
            ressel_add_per_round=self.ressel_add_per_round,
            ressel_max_rounds=self.ressel_max_rounds,
            eif_trees=self.eif_trees,
            eif_sample_size=self.eif_sample_size,
            eif_extension_level=self.eif_extension_level,
            eif_score_cut=self.eif_score_cut,
        )

    def action(self) -> SignatureAction:
        return SignatureAction(self.signature_action)

    def validate(self) -> None:
        if not self.ratings_path:
            raise ConfigError("ratings_path is required")
        if not self.scale_min < self.scale_max:
            raise ConfigError("scale_min must be less than scale_max")
        fr = (self.train_fraction, self.detect_fraction, self.eval_fraction)
        if any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be positive and sum to 1, got {fr}")
        if self.min_activity < 1:
            raise ConfigError("min_activity must be >= 1")
        if self.activity_by not in ("user", "item"):
            raise ConfigError(f"activity_by must be 'user' or 'item', got {self.activity_by!r}")
        if self.ensemble_variant not in VARIANTS:
            raise ConfigError(
                f"ensemble_variant must be one of {VARIANTS}, got {self.ensemble_variant!r}"
            )
        try:
            SignatureAction(self.signature_action)
        except ValueError:
            raise ConfigError(f"unknown signature_action {self.signature_action!r}") from None
        if self.signature_denominator not in (DENOMINATOR_LAST_DAY, DENOMINATOR_GLOBAL_NOISE):
            raise ConfigError(f"unknown signature_denominator {self.signature_denominator!r}")
        if self.serendipity_formula not in (FORMULA_COMPLEMENT, FORMULA_PAPER_LITERAL):
            raise ConfigError(f"unknown serendipity_formula {self.serendipity_formula!r}")
        if self.percent_basis not in (BASIS_USERS, BASIS_RATINGS):
            raise ConfigError(f"unknown percent_basis {self.percent_basis!r}")
        if self.clusters_k < 1 or self.top_k < 1:
            raise ConfigError("clusters_k and top_k must be >= 1")
        if self.mf_factors < 1 or self.mf_epochs < 1:
            raise ConfigError("mf_factors and mf_epochs must be >= 1")


_OPT_INT_FIELDS = {"rf_feature_subset", "eif_extension_level"}
_OPT_STR_FIELDS = {"movies_path", "run_id", "mask_path"}


def _coerce(name: str, value, kind: type):
    try:
        if kind is int:
            if isinstance(value, bool):
                raise ValueError("bool is not an integer here")
            if isinstance(value, float) and value != int(value):
                raise ValueError("not an integer")
            return int(value)
        if kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {name!r}: cannot read {value!r} as {kind.__name__}") from exc


def config_from_dict(values: Mapping[str, object]) -> PipelineConfig:
    """Build a config from a flat key-value mapping, coercing strings."""
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    defaults = PipelineConfig()
    out: dict[str, object] = {}
    for name, value in values.items():
        if name in _OPT_STR_FIELDS:
            out[name] = None if value in (None, "") else str(value)
        elif name in _OPT_INT_FIELDS:
            out[name] = None if value in (None, "", "none") else _coerce(name, value, int)
        else:
            out[name] = _coerce(name, value, type(getattr(defaults, name)))
    cfg = PipelineConfig(**out)  # type: ignore[arg-type]
    cfg.validate()
    return cfg


def config_to_dict(cfg: PipelineConfig) -> dict[str, object]:
    return dataclasses.asdict(cfg)


def load_config(path: str | Path) -> PipelineConfig:
    """Read a flat JSON object of config keys."""
    try:
        raw = read_json(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a JSON object of key-value pairs")
    return config_from_dict(raw)


def config_hash(cfg: PipelineConfig) -> str:
    """Hash of everything that affects results (output location excluded)."""
    d = config_to_dict(cfg)
    d.pop("out_dir")
    d.pop("run_id")
    blob = json.dumps(d, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- noise injection ----------------------------------------------------


class NoiseKind(Enum):
    UNIFORM_REPLACE = "uniform"
    FLIP = "flip"
    OPTOUT_BURST = "optout"


class GroundTruthMask(NamedTuple):
    kind: NoiseKind
    keys: frozenset[tuple[int, int]]
    rate: float
    seed: int


def _draw_other(rng: np.random.Generator, grid: np.ndarray, current: float) -> float:
    others = grid[grid != current]
    return float(others[rng.integers(len(others))])


def inject_noise(
    table: RatingsTable, rate: float, kind: NoiseKind, seed: int = 0
) -> tuple[RatingsTable, GroundTruthMask]:
    """Perturb an exact seeded share of the table and return the mask.

    uniform: each selected rating becomes a different grid value drawn
    uniformly.  flip: r -> r_max + r_min - r.  optout: the selection is
    over users, and every rating on a selected user's last active day is
    replaced by a fresh uniform grid draw.
    """
    if not 0.0 <= rate <= 0.5:
        raise ValueError(f"rate must be in [0, 0.5], got {rate}")
    rng = np.random.default_rng([seed, _SALT_INJECT[kind.value]])
    grid = table.scale.grid(0.5)
    rows = table.rows()
    changed: set[tuple[int, int]] = set()

    if kind is NoiseKind.OPTOUT_BURST:
        users = table.user_ids()
        n_sel = int(round(rate * len(users)))
        sel_users = sorted(users[i] for i in rng.permutation(len(users))[:n_sel])
        burst_keys: set[tuple[int, int]] = set()
        for user in sel_users:
            idx = table.user_rows(user)
            days = [utc_day(int(table.timestamps[k])) for k in idx]
            last = max(days)
            for k, day in zip(idx, days):
                if day == last:
                    burst_keys.add((user, int(table.items[k])))
        new_rows = []
        for u, i, v, t in rows:
            if (u, i) in burst_keys:
                v = _draw_other(rng, grid, v)
                changed.add((u, i))
            new_rows.append((u, i, v, t))
    else:
        n_sel = int(round(rate * len(rows)))
        sel = set(np.sort(rng.permutation(len(rows))[:n_sel]).tolist())
        new_rows = []
        for pos, (u, i, v, t) in enumerate(rows):
            if pos in sel:
                if kind is NoiseKind.FLIP:
                    v = table.scale.r_max + table.scale.r_min - v
                else:
                    v = _draw_other(rng, grid, v)
                changed.add((u, i))
            new_rows.append((u, i, v, t))

    out = RatingsTable(new_rows, table.scale, genres=table.genres)
    return out, GroundTruthMask(kind, frozenset(changed), rate, seed)


def write_mask(mask: GroundTruthMask, path: str | Path) -> None:
    dump_json(
        {
            "kind": mask.kind.value,
            "rate": mask.rate,
            "seed": mask.seed,
            "keys": sorted([list(k) for k in mask.keys]),
        },
        path,
    )


def read_mask(path: str | Path) -> GroundTruthMask:
    raw = read_json(path)
    return GroundTruthMask(
        NoiseKind(raw["kind"]),
        frozenset((int(u), int(i)) for u, i in raw["keys"]),
        float(raw["rate"]),
        int(raw["seed"]),
    )


# -- artifact layout ----------------------------------------------------


class RunPaths:
    def __init__(self, out_dir: str | Path, run_id: str):
        self.run_id = run_id
        self.base = Path(out_dir) / run_id
        self.splits = self.base / "splits"
        self.models = self.base / "models"
        self.ingest = self.base / "ingest.json"
        self.train_csv = self.splits / "train.csv"
        self.detect_csv = self.splits / "detect.csv"
        self.eval_csv = self.splits / "eval.csv"
        self.votes = self.base / "votes.csv"
        self.venn = self.base / "venn.json"
        self.board_json = self.base / "board.json"
        self.features = self.base / "features.csv"
        self.ensemble_csv = self.base / "ensemble.csv"
        self.signature_csv = self.base / "signature.csv"
        self.report = self.base / "report.json"
        self.before_model = self.models / "before.json"
        self.after_model = self.models / "after.json"

    def ensure(self) -> None:
        self.splits.mkdir(parents=True, exist_ok=True)
        self.models.mkdir(parents=True, exist_ok=True)

    def scatter(self, pair: str) -> Path:
        return self.base / f"scatter-{pair}.svg"

    def deltas(self, pair: str) -> Path:
        return self.base / f"deltas-{pair}.csv"


def run_paths(cfg: PipelineConfig, mode: str = "run") -> RunPaths:
    run_id = cfg.run_id if cfg.run_id else f"{mode}-{config_hash(cfg)}"
    return RunPaths(cfg.out_dir, run_id)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, DataError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise DataError(f"missing artifact {path}; run the {producer} stage first")
    return path


# -- stage bodies -------------------------------------------------------


def stage_ingest(cfg: PipelineConfig) -> tuple[RatingsTable, GenreMap | None, dict]:
    """Load, dedupe, activity-filter, and attach genres."""
    path = Path(cfg.ratings_path)
    if not path.exists():
        raise DataError(f"ratings file not found: {path}")
    try:
        table = load_ratings(path, cfg.scale())
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    genres: GenreMap | None = None
    if cfg.movies_path:
        mpath = Path(cfg.movies_path)
        if not mpath.exists():
            raise DataError(f"movies file not found: {mpath}")
        try:
            genres = load_genres(mpath)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    loaded = len(table)
    dropped = table.dropped_duplicates
    table = filter_min_activity(table, cfg.min_activity, cfg.activity_by)
    if len(table) == 0:
        raise DataError(
            f"no ratings left after min_activity={cfg.min_activity} filter on {cfg.activity_by}s"
        )
    if genres is not None:
        table = table.with_genres(genres)
    counts = {
        "ratings_loaded": loaded,
        "dropped_duplicates": dropped,
        "ratings_after_filter": len(table),
        "users": len(table.user_ids()),
        "items": len(table.item_ids()),
    }
    return table, genres, counts


def split_three(
    table: RatingsTable, fractions: tuple[float, float, float], seed: int
) -> tuple[RatingsTable, RatingsTable, RatingsTable]:
    """Per-user three-way split: train for modeling, detect for noise
    verdicts, eval held out untouched for the before/after comparison."""
    f_train, f_detect, f_eval = fractions
    first = f_train + f_detect
    working, eval_t = split_train_test(
        table, SplitSpec(first, derive_seed(seed, _SALT_SPLIT_EVAL))
    )
    train, detect = split_train_test(
        working, SplitSpec(f_train / first, derive_seed(seed, _SALT_SPLIT_DETECT))
    )
    return train, detect, eval_t


def stage_split(
    cfg: PipelineConfig, table: RatingsTable, paths: RunPaths
) -> tuple[RatingsTable, RatingsTable, RatingsTable]:
    fractions = (cfg.train_fraction, cfg.detect_fraction, cfg.eval_fraction)
    train, detect, eval_t = split_three(table, fractions, cfg.seed)
    train.to_csv(paths.train_csv)
    detect.to_csv(paths.detect_csv)
    eval_t.to_csv(paths.eval_csv)
    if len(detect) == 0 or len(eval_t) == 0:
        raise DataError("detect or eval split is empty; dataset too small for the fractions")
    return train, detect, eval_t


def stage_board(
    cfg: PipelineConfig,
    train: RatingsTable,
    detect: RatingsTable,
    paths: RunPaths,
) -> tuple[BoardResult, list[tuple[int, int]], np.ndarray, dict]:
    """Layer 1 plus the feature matrix Layer 2 will consume; everything
    persisted so the ensemble stage can run without recomputation."""
    board = run_board(train, detect, cfg.board_config())
    context = train.merged(detect) if len(train) else detect
    keys, X = build_feature_matrix(detect, context, board)
    write_votes(board.votesets, paths.votes)
    dump_json(board.venn, paths.venn)
    write_features(paths.features, keys, X)
    section = {
        "consensus": {
            "noisy": sum(1 for vs in board.votesets if vs.consensus is Consensus.NOISY),
            "clean": sum(1 for vs in board.votesets if vs.consensus is Consensus.CLEAN),
            "uncertain": sum(1 for vs in board.votesets if vs.consensus is Consensus.UNCERTAIN),
        },
        "per_detector_noisy": {
            det: sum(1 for vs in board.votesets if vs.votes[det] is Verdict.NOISY)
            for det in DETECTOR_IDS
        },
        "venn": dict(board.venn),
        "nf3_unpredictable": board.nf3.n_unpredictable,
        "nf4_prefiltered": board.nf4.n_prefiltered,
    }
    dump_json(section, paths.board_json)
    return board, keys, X, section


def stage_ensemble(
    cfg: PipelineConfig,
    keys: Sequence[tuple[int, int]],
    X: np.ndarray,
    consensus_by_key: Mapping[tuple[int, int], Consensus],
    paths: RunPaths,
) -> tuple[dict[tuple[int, int], Verdict], dict]:
    """Layer 2: arbitrate every Uncertain rating with the configured
    learner; returns the complete label map (consensus where unanimous)."""
    labeled_idx = [
        k for k, key in enumerate(keys) if consensus_by_key[key] is not Consensus.UNCERTAIN
    ]
    uncertain_idx = [
        k for k, key in enumerate(keys) if consensus_by_key[key] is Consensus.UNCERTAIN
    ]
    n_features = X.shape[1] if X.ndim == 2 else 0
    X_lab = X[labeled_idx] if labeled_idx else np.zeros((0, n_features))
    y = np.array(
        [1 if consensus_by_key[keys[k]] is Consensus.NOISY else 0 for k in labeled_idx],
        dtype=np.int64,
    )
    X_unc = X[uncertain_idx] if uncertain_idx else np.zeros((0, n_features))
    unc_keys = [keys[k] for k in uncertain_idx]

    labels: dict[tuple[int, int], Verdict] = {}
    for key in keys:
        c = consensus_by_key[key]
        if c is Consensus.NOISY:
            labels[key] = Verdict.NOISY
        elif c is Consensus.CLEAN:
            labels[key] = Verdict.CLEAN
    uncertain_labels: dict[tuple[int, int], Verdict] = {}
    scores: dict[tuple[int, int], float] = {}
    if unc_keys:
        model = train_el(
            X_lab, y, X_unc, cfg.ensemble_config(), derive_seed(cfg.seed, _SALT_ENSEMBLE)
        )
        uncertain_labels, scores = classify_uncertain(model, unc_keys, X_unc)
        labels.update(uncertain_labels)
    write_classification(uncertain_labels, scores, cfg.ensemble_variant, paths.ensemble_csv)
    info = {
        "variant": cfg.ensemble_variant,
        "uncertain_total": len(unc_keys),
        "classified_noisy": sum(1 for v in uncertain_labels.values() if v is Verdict.NOISY),
        "classified_clean": sum(1 for v in uncertain_labels.values() if v is Verdict.CLEAN),
    }
    return labels, info


def stage_signature(
    cfg: PipelineConfig,
    detect: RatingsTable,
    labels: Mapping[tuple[int, int], Verdict],
    paths: RunPaths,
) -> list[SignatureHit]:
    hits = detect_optout(
        detect, dict(labels), cfg.signature_threshold, cfg.signature_denominator
    )
    write_hits(hits, cfg.action(), paths.signature_csv)
    return hits


def _clean_corpus(
    corpus: RatingsTable,
    labels: Mapping[tuple[int, int], Verdict],
    hits: list[SignatureHit],
    action: SignatureAction,
) -> tuple[RatingsTable, dict]:
    noisy_keys = {k for k, v in labels.items() if v is Verdict.NOISY}
    after_noise = corpus.without_keys(noisy_keys)
    cleaned = apply_signature_action(after_noise, hits, action)
    removal = {
        "corpus_size": len(corpus),
        "noisy_ratings_removed": len(corpus) - len(after_noise),
        "signature_ratings_removed": len(after_noise) - len(cleaned),
        "cleaned_size": len(cleaned),
    }
    return cleaned, removal


def _evaluate_arm(
    model: MfModel,
    corpus: RatingsTable,
    eval_t: RatingsTable,
    universe: Sequence[int],
    assignment: Mapping[int, int],
    genres: GenreMap | None,
    cfg: PipelineConfig,
) -> list[UserEval]:
    out: list[UserEval] = []
    for user in universe:
        recs = recommend_topk(model, corpus, user, cfg.top_k)
        rows = eval_t.user_rows(user)
        relevant = {
            int(eval_t.items[k])
            for k in rows
            if float(eval_t.values[k]) >= cfg.relevance_threshold
        }
        rm = ranking_metrics(recs, relevant, cfg.top_k)
        if genres is not None:
            history = {int(corpus.items[k]) for k in corpus.user_rows(user)}
            ser = serendipity(recs, history, relevant, genres, cfg.serendipity_formula)
        else:
            ser = 0.0
        out.append(
            UserEval(user, rm.ndcg, rm.precision, rm.recall, rm.f1, ser, int(assignment[user]))
        )
    return out


def _cluster_ndcg_means(evals: Sequence[UserEval]) -> dict[int, float]:
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for e in evals:
        sums[e.cluster] = sums.get(e.cluster, 0.0) + e.ndcg
        counts[e.cluster] = counts.get(e.cluster, 0) + 1
    return {c: sums[c] / counts[c] for c in sorted(sums)}


def stage_evaluate(
    cfg: PipelineConfig,
    corpus: RatingsTable,
    cleaned: RatingsTable,
    eval_t: RatingsTable,
    genres: GenreMap | None,
    paths: RunPaths,
    venn: Mapping[str, int],
) -> tuple[dict[str, DeltaReport], dict]:
    """Retrain both arms, evaluate on the untouched fold, classify deltas."""
    mf_seed = derive_seed(cfg.seed, _SALT_MF)
    before = mf_train(
        corpus, f=cfg.mf_factors, epochs=cfg.mf_epochs, lr=cfg.mf_lr, reg=cfg.mf_reg, seed=mf_seed
    )
    after = mf_train(
        cleaned, f=cfg.mf_factors, epochs=cfg.mf_epochs, lr=cfg.mf_lr, reg=cfg.mf_reg, seed=mf_seed
    )
    save_model(before, paths.before_model)
    save_model(after, paths.after_model)

    before_users = set(corpus.user_ids())
    after_users = set(cleaned.user_ids())
    eval_users = eval_t.user_ids()
    universe = [u for u in eval_users if u in before_users and u in after_users]
    excluded = sorted(u for u in eval_users if u not in after_users or u not in before_users)
    if not universe:
        raise DataError("no users remain evaluable in the held-out fold")

    vectors = {u: before.user_vector(u) for u in universe}
    assign = cluster_users(vectors, k=cfg.clusters_k, seed=derive_seed(cfg.seed, _SALT_CLUSTER))
    before_evals = _evaluate_arm(before, corpus, eval_t, universe, assign.assignment, genres, cfg)
    after_evals = _evaluate_arm(after, cleaned, eval_t, universe, assign.assignment, genres, cfg)
    weights = {u: len(eval_t.user_rows(u)) for u in universe}

    reports: dict[str, DeltaReport] = {}
    pair_sections: dict[str, dict] = {}
    for metric in ACCURACY_METRICS:
        rep = delta_points(
            before_evals,
            after_evals,
            metric,
            (cfg.plane_a, cfg.plane_b),
            venn=venn,
            basis=cfg.percent_basis,
            weights=weights,
        )
        reports[rep.pair] = rep
        write_delta_csv(paths.deltas(rep.pair), rep.points)
        write_scatter_svg(paths.scatter(rep.pair), rep.points, rep.plane, rep.pair)
        q_counts: dict[str, int] = {"I": 0, "II": 0, "III": 0, "IV": 0, "Origin": 0}
        for p in rep.points:
            q_counts[p.quadrant.value] += 1
        pair_sections[rep.pair] = {
            "percent_positive": rep.percent_positive,
            "quadrant_counts": q_counts,
            "boundary_points": sum(1 for p in rep.points if p.boundary),
        }

    section = {
        "clusters_k": assign.k,
        "top_k": cfg.top_k,
        "plane": [cfg.plane_a, cfg.plane_b],
        "universe_users": len(universe),
        "excluded_users": excluded,
        "global_before": reports["serendipity-ndcg"].global_before,
        "global_after": reports["serendipity-ndcg"].global_after,
        "critical_group_pct_before": critical_groups(_cluster_ndcg_means(before_evals)),
        "critical_group_pct_after": critical_groups(_cluster_ndcg_means(after_evals)),
        "pairs": pair_sections,
    }
    return reports, section


# -- report assembly ----------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, Enum):
        return obj.value
    return obj


_REPORT_GLOSSARY = {
    "quadrants": (
        "x is the serendipity delta and y the accuracy delta; sign patterns "
        "map (+,+)->I, (-,+)->II, (-,-)->III, (+,-)->IV; a zero coordinate "
        "takes the positive sign by convention and is flagged as a boundary "
        "point; the exact origin is labeled Origin"
    ),
    "positive": "a point counts positive iff plane_a*x + plane_b*y > 0 strictly",
    "percent_positive_basis": (
        "users: one vote per evaluated user; ratings: votes weighted by the "
        "user's held-out rating count"
    ),
    "critical_group_pct": (
        "share of clusters whose mean nDCG falls strictly below the mean of "
        "the cluster means"
    ),
}


def _assemble_report(
    cfg: PipelineConfig,
    mode: str,
    detector: str | None,
    counts: dict,
    split_sizes: dict,
    board_section: dict,
    ens_info: dict,
    hits: list[SignatureHit],
    removal: dict,
    eval_section: dict,
    ground_truth: dict | None,
) -> dict:
    report = {
        "config": {
            k: v for k, v in config_to_dict(cfg).items() if k not in ("out_dir", "run_id")
        },
        "config_hash": config_hash(cfg),
        "mode": mode,
        "detector": detector,
        "seed": cfg.seed,
        "counts": {**counts, **split_sizes},
        "board": board_section,
        "ensemble": ens_info,
        "signature": {
            "flagged_users": sorted(h.user_id for h in hits),
            "count": len(hits),
            "threshold": cfg.signature_threshold,
            "denominator": cfg.signature_denominator,
            "action": cfg.signature_action,
        },
        "removal": removal,
        "evaluation": eval_section,
        "glossary": _REPORT_GLOSSARY,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if ground_truth is not None:
        report["ground_truth"] = ground_truth
    return report


def _precision_recall(flagged: set, positives: set) -> dict:
    tp = len(flagged & positives)
    return {
        "flagged": len(flagged),
        "true_positives": tp,
        "precision": tp / len(flagged) if flagged else 0.0,
        "recall": tp / len(positives) if positives else 0.0,
    }


def ground_truth_section(
    mask: GroundTruthMask,
    votesets: Sequence[VoteSet],
    labels: Mapping[tuple[int, int], Verdict],
) -> dict:
    """Detector precision/recall against the known perturbed keys,
    restricted to the split the detectors actually saw."""
    detect_keys = {vs.key for vs in votesets}
    positives = set(mask.keys) & detect_keys
    per_detector = {}
    for det in DETECTOR_IDS:
        flagged = {vs.key for vs in votesets if vs.votes[det] is Verdict.NOISY}
        per_detector[det] = _precision_recall(flagged, positives)
    consensus_flagged = {vs.key for vs in votesets if vs.consensus is Consensus.NOISY}
    final_flagged = {k for k, v in labels.items() if v is Verdict.NOISY}
    return {
        "kind": mask.kind.value,
        "rate": mask.rate,
        "mask_size": len(mask.keys),
        "positives_in_detect": len(positives),
        "detectors": per_detector,
        "consensus": _precision_recall(consensus_flagged, positives),
        "final_labels": _precision_recall(final_flagged, positives),
    }


def _load_mask_if_configured(cfg: PipelineConfig) -> GroundTruthMask | None:
    if not cfg.mask_path:
        return None
    mpath = Path(cfg.mask_path)
    if not mpath.exists():
        raise DataError(f"mask file not found: {mpath}")
    return read_mask(mpath)


# -- drivers ------------------------------------------------------------


class RunResult(NamedTuple):
    report: DeltaReport
    reports: dict[str, DeltaReport]
    report_dict: dict
    paths: RunPaths
    board: BoardResult
    labels: dict[tuple[int, int], Verdict]
    hits: list[SignatureHit]


def _drive(cfg: PipelineConfig, mode: str, detector: str | None) -> RunResult:
    cfg.validate()
    paths = run_paths(cfg, mode if detector is None else f"baseline-{detector.lower()}")
    paths.ensure()

    table, genres, counts = _stage("ingest", stage_ingest, cfg)
    dump_json(counts, paths.ingest)
    train, detect, eval_t = _stage("split", stage_split, cfg, table, paths)
    board, keys, X, board_section = _stage("board", stage_board, cfg, train, detect, paths)
    corpus = train.merged(detect)

    hits: list[SignatureHit] = []
    if detector is None:
        consensus_by_key = {vs.key: vs.consensus for vs in board.votesets}
        labels, ens_info = _stage(
            "ensemble", stage_ensemble, cfg, keys, X, consensus_by_key, paths
        )
        hits = _stage("signature", stage_signature, cfg, detect, labels, paths)
    else:
        labels = {vs.key: vs.votes[detector] for vs in board.votesets}
        ens_info = {
            "variant": None,
            "uncertain_total": 0,
            "classified_noisy": 0,
            "classified_clean": 0,
        }
        write_classification({}, {}, cfg.ensemble_variant, paths.ensemble_csv)
        write_hits([], cfg.action(), paths.signature_csv)

    cleaned, removal = _clean_corpus(corpus, labels, hits, cfg.action())
    reports, eval_section = _stage(
        "evaluate", stage_evaluate, cfg, corpus, cleaned, eval_t, genres, paths, board.venn
    )

    mask = _load_mask_if_configured(cfg)
    gt = ground_truth_section(mask, board.votesets, labels) if mask is not None else None
    split_sizes = {"train": len(train), "detect": len(detect), "eval": len(eval_t)}
    report_dict = _assemble_report(
        cfg, mode if detector is None else "baseline", detector, counts, split_sizes,
        board_section, ens_info, hits, removal, eval_section, gt,
    )
    dump_json(_jsonable(report_dict), paths.report)
    return RunResult(
        reports["serendipity-ndcg"], reports, report_dict, paths, board, labels, hits
    )


def run_framework(cfg: PipelineConfig) -> RunResult:
    """Full three-layer run: board consensus, ensemble arbitration of the
    Uncertain set, opt-out signature, removal, retrain, evaluate."""
    return _drive(cfg, "run", None)


def run_baseline(cfg: PipelineConfig, detector: str) -> RunResult:
    """Single-detector run: that detector's Noisy verdicts alone drive
    removal; the evaluation protocol is identical to the full framework."""
    if detector not in DETECTOR_IDS:
        raise ConfigError(f"detector must be one of {DETECTOR_IDS}, got {detector!r}")
    return _drive(cfg, "baseline", detector)


# -- stage resumption (CLI) ----------------------------------------------
#
# Each command below reads only artifacts persisted by earlier stages, so a
# pipeline interrupted (or intentionally staged) resumes bit-identically.


def _load_genres_if_configured(cfg: PipelineConfig) -> GenreMap | None:
    if not cfg.movies_path:
        return None
    mpath = Path(cfg.movies_path)
    if not mpath.exists():
        raise DataError(f"movies file not found: {mpath}")
    return load_genres(mpath)


def _load_split(cfg: PipelineConfig, path: Path, genres: GenreMap | None) -> RatingsTable:
    try:
        table = load_ratings(path, cfg.scale())
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    return table.with_genres(genres) if genres is not None else table


def cli_ingest(cfg: PipelineConfig, paths: RunPaths) -> dict:
    paths.ensure()
    table, _genres, counts = _stage("ingest", stage_ingest, cfg)
    dump_json(counts, paths.ingest)
    _stage("split", stage_split, cfg, table, paths)
    return counts


def cli_detect(cfg: PipelineConfig, paths: RunPaths) -> dict:
    genres = _load_genres_if_configured(cfg)
    train = _load_split(cfg, _require(paths.train_csv, "ingest"), genres)
    detect = _load_split(cfg, _require(paths.detect_csv, "ingest"), genres)
    _board, _keys, _X, section = _stage("board", stage_board, cfg, train, detect, paths)
    return section


def cli_ensemble(cfg: PipelineConfig, paths: RunPaths) -> dict:
    votesets = read_votes(_require(paths.votes, "detect"))
    keys, X = read_features(_require(paths.features, "detect"))
    consensus_by_key = {vs.key: vs.consensus for vs in votesets}
    _labels, info = _stage("ensemble", stage_ensemble, cfg, keys, X, consensus_by_key, paths)
    return info


def _labels_from_artifacts(paths: RunPaths) -> dict[tuple[int, int], Verdict]:
    votesets = read_votes(_require(paths.votes, "detect"))
    labels: dict[tuple[int, int], Verdict] = {}
    for vs in votesets:
        if vs.consensus is Consensus.NOISY:
            labels[vs.key] = Verdict.NOISY
        elif vs.consensus is Consensus.CLEAN:
            labels[vs.key] = Verdict.CLEAN
    ensemble_labels = read_classification(_require(paths.ensemble_csv, "ensemble"))
    labels.update(ensemble_labels)
    return labels


def cli_signature(cfg: PipelineConfig, paths: RunPaths) -> list[SignatureHit]:
    genres = _load_genres_if_configured(cfg)
    detect = _load_split(cfg, _require(paths.detect_csv, "ingest"), genres)
    labels = _labels_from_artifacts(paths)
    return _stage("signature", stage_signature, cfg, detect, labels, paths)


def cli_evaluate(cfg: PipelineConfig, paths: RunPaths) -> dict:
    genres = _load_genres_if_configured(cfg)
    train = _load_split(cfg, _require(paths.train_csv, "ingest"), genres)
    detect = _load_split(cfg, _require(paths.detect_csv, "ingest"), genres)
    eval_t = _load_split(cfg, _require(paths.eval_csv, "ingest"), genres)
    counts = read_json(_require(paths.ingest, "ingest"))
    board_section = read_json(_require(paths.board_json, "detect"))
    votesets = read_votes(_require(paths.votes, "detect"))
    labels = _labels_from_artifacts(paths)
    hits, action = read_hits(_require(paths.signature_csv, "signature"))
    ens_info = {
        "variant": cfg.ensemble_variant,
        "uncertain_total": sum(
            1 for vs in votesets if vs.consensus is Consensus.UNCERTAIN
        ),
        "classified_noisy": sum(
            1
            for vs in votesets
            if vs.consensus is Consensus.UNCERTAIN and labels[vs.key] is Verdict.NOISY
        ),
        "classified_clean": sum(
            1
            for vs in votesets
            if vs.consensus is Consensus.UNCERTAIN and labels[vs.key] is Verdict.CLEAN
        ),
    }
    corpus = train.merged(detect)
    cleaned, removal = _clean_corpus(corpus, labels, hits, action or cfg.action())
    reports, eval_section = _stage(
        "evaluate", stage_evaluate, cfg, corpus, cleaned, eval_t, genres, paths,
        board_section["venn"],
    )
    mask = _load_mask_if_configured(cfg)
    gt = ground_truth_section(mask, votesets, labels) if mask is not None else None
    split_sizes = {"train": len(train), "detect": len(detect), "eval": len(eval_t)}
    report_dict = _assemble_report(
        cfg, "run", None, counts, split_sizes, board_section, ens_info, hits,
        removal, eval_section, gt,
    )
    dump_json(_jsonable(report_dict), paths.report)
    return report_dict


# -- report comparison ----------------------------------------------------


def strip_timestamp(report: dict) -> dict:
    """Copy of a report dict without its volatile timestamp field."""
    out = dict(report)
    out.pop("timestamp", None)
    return out


def reports_equal(path_a: str | Path, path_b: str | Path) -> bool:
    """Byte-level equality of two report files once timestamps are removed."""
    a = strip_timestamp(read_json(path_a))
    b = strip_timestamp(read_json(path_b))
    return json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
