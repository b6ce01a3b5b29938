"""Pipeline stages over a run directory; each stage reads upstream artifacts and writes its own."""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .arrayio import read_array, write_array
from .classifiers.ddm import (
    METRIC_KEYS,
    DdmCheckpoint,
    evaluate_ddm,
    ensemble_probabilities,
    snapshot_probabilities,
    train_ddm,
)
from .classifiers.debias import TrainStrategy
from .classifiers.fairness import subgroup_fairness, write_table4
from .classifiers.judge import JudgeCheckpoint, evaluate_leakage, predict_proba, train_judge, write_leakage_csv
from .config import RunConfig
from .dataio import (
    FINDINGS,
    DatasetSplit,
    attribute_vector,
    cohort_stats,
    findings_matrix,
    ingest_manifest,
    load_dataset,
    make_synthetic_dataset,
    save_dataset,
    split_by_patient,
    split_from_assignment,
    stack_pixels,
)
from .editing import EditedImageSet, alpha_filename, alpha_sweep, read_edited, write_edited
from .errors import ConfigError, FairnessUndefined, MissingArtifact, UndefinedAuc, UndefinedCorrelation
from .explain import gradcam, save_overlay
from .metrics import auc, confusion_metrics, pr_auc, roc_curve, ssim_patchwise
from .neutralizer.training import NeutralizerCheckpoint, train_neutralizer, write_loss_log
from .stats import (
    RankTable,
    benjamini_hochberg,
    bootstrap_paired,
    cd_payload,
    delong_test,
    friedman,
    nemenyi,
    pearson_r,
)

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


class RunLayout:
    """Paths of every artifact inside one run directory."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def data_manifest(self) -> Path:
        return self.root / "data" / "manifest.csv"

    @property
    def cohort(self) -> Path:
        return self.root / "data" / "cohort.json"

    def neutralizer_dir(self, attribute) -> Path:
        return self.root / "neutralizer" / attribute

    def neutralizer_ckpt(self, attribute) -> Path:
        return self.neutralizer_dir(attribute) / "checkpoint.nz"

    @property
    def edited_root(self) -> Path:
        return self.root / "edited"

    def edited_dir(self, attribute, split) -> Path:
        return self.edited_root / attribute / split

    @property
    def judge_ckpt(self) -> Path:
        return self.root / "judge" / "checkpoint.nz"

    def audit_dir(self, attribute) -> Path:
        return self.root / "audit" / attribute

    def ddm_ckpt(self, attribute, name) -> Path:
        return self.root / "ddm" / attribute / name / "checkpoint.nz"

    def eval_dir(self, attribute, name) -> Path:
        return self.root / "eval" / attribute / name

    def stats_dir(self, attribute) -> Path:
        return self.root / "stats" / attribute

    def gradcam_dir(self, attribute) -> Path:
        return self.root / "gradcam" / attribute

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    @property
    def manifests(self) -> Path:
        return self.root / "manifests"


def require(path: Path, producer: str) -> Path:
    if not Path(path).exists():
        raise MissingArtifact(f"{path} not found; run `neutralyze {producer}` first", producer=producer)
    return Path(path)


def _write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _cohort_payload(records) -> dict:
    s = cohort_stats(records)
    return asdict(s)


# ---------------------------------------------------------------------------
# data


def preprocess(cfg: RunConfig, layout: RunLayout) -> dict:
    manifest, root = cfg.paths.manifest, cfg.paths.image_root
    if not manifest or not Path(manifest).is_file():
        raise ConfigError(f"paths.manifest: {manifest!r} is not a file")
    if not root or not Path(root).is_dir():
        raise ConfigError(f"paths.image_root: {root!r} is not a directory")
    records = ingest_manifest(manifest, root, cfg.image_size)
    split = split_by_patient(records, cfg.synth.ratios, cfg.seed)
    save_dataset(records, layout.data_manifest.parent, split)
    _write_json(layout.cohort, _cohort_payload(records))
    return {"n_images": len(records), "manifest": str(layout.data_manifest)}


def synth(cfg: RunConfig, layout: RunLayout, n_images: int | None = None, seed: int | None = None) -> dict:
    n = cfg.synth.n_images if n_images is None else n_images
    seed = cfg.seed if seed is None else seed
    records = make_synthetic_dataset(n, cfg.synth.image_size, seed)
    split = split_by_patient(records, cfg.synth.ratios, seed)
    save_dataset(records, layout.data_manifest.parent, split)
    _write_json(layout.cohort, _cohort_payload(records))
    return {"n_images": n, "manifest": str(layout.data_manifest)}


def load_split(layout: RunLayout, seed: int = 0) -> DatasetSplit:
    require(layout.data_manifest, "preprocess` or `neutralyze synth")
    records, assignment = load_dataset(layout.data_manifest)
    if len(assignment) != len(records):
        return split_by_patient(records, seed=seed)
    return split_from_assignment(records, assignment, seed)


# ---------------------------------------------------------------------------
# neutralizer and editing


def train_neutralizer_stage(cfg: RunConfig, layout: RunLayout) -> dict:
    split = load_split(layout, cfg.seed)
    ck = train_neutralizer(
        split.train,
        cfg.generator_spec(),
        cfg.neutralizer.loss,
        cfg.neutralizer_hyper(),
        progress=lambda e, rows: log.info("neutralizer epoch %d done (%d steps)", e, len(rows)),
    )
    out = layout.neutralizer_dir(cfg.attribute)
    out.mkdir(parents=True, exist_ok=True)
    ck.save(layout.neutralizer_ckpt(cfg.attribute))
    write_loss_log(ck.loss_log, out / "loss_log.csv")
    return {"checkpoint": str(layout.neutralizer_ckpt(cfg.attribute)), "epochs": ck.epoch}


def generate(
    cfg: RunConfig,
    layout: RunLayout,
    checkpoint: str | None = None,
    manifest: str | None = None,
    attribute: str | None = None,
    out: str | None = None,
) -> dict:
    attribute = attribute or cfg.attribute
    ck_path = Path(checkpoint) if checkpoint else layout.neutralizer_ckpt(attribute)
    ck = NeutralizerCheckpoint.load(require(ck_path, "train-neutralizer"))
    if manifest:
        records, assignment = load_dataset(require(Path(manifest), "preprocess` or `neutralyze synth"))
        split = split_from_assignment(records, assignment, cfg.seed) if len(assignment) == len(records) else None
    else:
        split = load_split(layout, cfg.seed)
    root = Path(out) if out else layout.edited_root
    written = {}
    parts = split.items() if split else [("all", records)]
    for name, recs in parts:
        edited = alpha_sweep(ck.generator, recs, cfg.alphas, attribute, splits={r.image_id: name for r in recs})
        written[name] = str(write_edited(edited, root, name))
    return {"attribute": attribute, "dirs": written}


# ---------------------------------------------------------------------------
# judge


def train_judge_stage(cfg: RunConfig, layout: RunLayout) -> dict:
    split = load_split(layout, cfg.seed)
    judge = train_judge(split.train, cfg.judge_hyper(), progress=lambda e, l: log.info("judge epoch %d loss %.4f", e, l))
    layout.judge_ckpt.parent.mkdir(parents=True, exist_ok=True)
    judge.save(layout.judge_ckpt)
    return {"checkpoint": str(layout.judge_ckpt), "final_loss": judge.final_loss}


def audit(cfg: RunConfig, layout: RunLayout) -> dict:
    judge = JudgeCheckpoint.load(require(layout.judge_ckpt, "train-judge"))
    edited_dir = require(layout.edited_dir(cfg.attribute, "test") / "index.json", "generate").parent
    edited = read_edited(edited_dir)
    rows = evaluate_leakage(judge, edited)
    out = layout.audit_dir(cfg.attribute)
    out.mkdir(parents=True, exist_ok=True)
    write_leakage_csv(rows, out / "leakage.csv")
    _write_json(out / "leakage.json", rows)
    with open(out / "roc_points.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "threshold", "fpr", "tpr"])
        for a in edited.alphas:
            scores = predict_proba(judge, edited.stack(a), edited.attribute)
            try:
                curve = roc_curve(scores, edited.labels)
            except UndefinedAuc:
                continue
            for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
                w.writerow([a, repr(float(t)), repr(float(f)), repr(float(p))])
    return {"rows": rows}


# ---------------------------------------------------------------------------
# diagnosis model


def _strategy_by_name(cfg: RunConfig, names) -> list[TrainStrategy]:
    all_s = cfg.strategies()
    if not names:
        return all_s
    picked = [s for s in all_s if s.kind in names or s.name in names]
    unknown = set(names) - {s.kind for s in picked} - {s.name for s in picked}
    if unknown:
        raise ConfigError(f"unknown or disabled strategy: {sorted(unknown)}")
    return picked


def _edited_stack(layout: RunLayout, attribute: str, split: str, alpha: float) -> np.ndarray:
    d = require(layout.edited_dir(attribute, split) / "index.json", "generate").parent
    path = d / alpha_filename(alpha)
    if not path.exists():
        raise MissingArtifact(f"{path} not found; include alpha {alpha} and re-run `neutralyze generate`", "generate")
    return read_array(path)


def _inputs(cfg, layout, strategy, split_name, records) -> np.ndarray:
    if strategy.kind == "neutralized":
        return _edited_stack(layout, cfg.attribute, split_name, strategy.alpha)
    return stack_pixels(records)


def train_ddm_stage(cfg: RunConfig, layout: RunLayout, strategies=None) -> dict:
    split = load_split(layout, cfg.seed)
    done = {}
    for strat in _strategy_by_name(cfg, strategies):
        images = _inputs(cfg, layout, strat, "train", split.train)
        ck = train_ddm(
            images,
            findings_matrix(split.train),
            strat,
            cfg.ddm_hyper(),
            groups=attribute_vector(split.train, cfg.attribute),
            progress=lambda e, l, n=strat.name: log.info("ddm %s epoch %d loss %.4f", n, e, l),
        )
        path = layout.ddm_ckpt(cfg.attribute, strat.name)
        path.parent.mkdir(parents=True, exist_ok=True)
        ck.save(path)
        done[strat.name] = str(path)
    return {"checkpoints": done}


def eval_ddm_stage(cfg: RunConfig, layout: RunLayout, strategies=None) -> dict:
    split = load_split(layout, cfg.seed)
    labels = findings_matrix(split.test)
    groups = attribute_vector(split.test, cfg.attribute)
    results = {}
    for strat in _strategy_by_name(cfg, strategies):
        ck = DdmCheckpoint.load(require(layout.ddm_ckpt(cfg.attribute, strat.name), "train-ddm"))
        images = _inputs(cfg, layout, strat, "test", split.test)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = evaluate_ddm(ck, images, labels)
            probs = ensemble_probabilities(snapshot_probabilities(ck, images))
            fairness = subgroup_fairness(probs, labels, groups)
        out = layout.eval_dir(cfg.attribute, strat.name)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "metrics.json", report.to_dict())
        report.write_csv(out / "per_finding.csv")
        write_array(probs.astype(np.float32), out / "probs.npy")
        _write_json(out / "fairness.json", fairness.to_dict())
        results[strat.name] = report.macro
    return {"macro": results}


# ---------------------------------------------------------------------------
# statistics


def _macro_metric(key):
    def fn(probs, labels):
        vals = []
        for j in range(labels.shape[1]):
            if len(np.unique(labels[:, j])) < 2:
                continue
            if key == "roc_auc":
                vals.append(auc(probs[:, j], labels[:, j]))
            elif key == "pr_auc":
                vals.append(pr_auc(probs[:, j], labels[:, j]))
            else:
                vals.append(confusion_metrics(probs[:, j], labels[:, j])[key.upper()])
        if not vals:
            raise ValueError("no finding with both classes")
        return float(np.nanmean(vals))

    return fn


def _available_evals(cfg, layout, attribute: str | None = None) -> dict[str, np.ndarray]:
    out = {}
    for s in cfg.strategies():
        p = layout.eval_dir(attribute or cfg.attribute, s.name) / "probs.npy"
        if p.exists():
            out[s.name] = read_array(p).astype(np.float64)
    return out


def ssim_alpha_table(edited: EditedImageSet, patch: int, max_images: int, encoder: str) -> tuple[list, list]:
    """Mean SSIM(original, edit) per alpha and per edit direction, with Pearson r against alpha."""
    curve, table = [], []
    names = {"sex": ("female_to_male", "male_to_female"), "age": ("young_to_old", "old_to_young")}[edited.attribute]
    originals = edited.stack(edited.alphas[0]) if edited.alphas[0] == 0.0 else None
    if originals is None:
        return curve, table
    for bit, direction in enumerate(names):
        idx = np.flatnonzero(edited.labels == bit)[:max_images]
        if len(idx) == 0:
            continue
        means = []
        for a in edited.alphas:
            stack = edited.stack(a)
            m = float(np.mean([ssim_patchwise(originals[i], stack[i], patch=patch).mean_ssim for i in idx]))
            means.append(m)
            curve.append({"direction": direction, "alpha": a, "mean_ssim": m, "n": len(idx)})
        try:
            r, p = pearson_r(edited.alphas, means)
        except UndefinedCorrelation:
            r, p = None, None
        table.append({"attribute": edited.attribute, "direction": direction, "encoder": encoder, "r": r, "p": p})
    return curve, table


def _write_rows(path: Path, rows: list[dict], columns) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})


def _pooled_friedman(cfg, layout, labels: np.ndarray) -> dict | None:
    """Friedman over findings x attributes when both attributes have evaluations."""
    per_attr = {a: _available_evals(cfg, layout, a) for a in ("sex", "age")}
    names = [n for n in per_attr["sex"] if n in per_attr["age"]]
    if len(names) < 3:
        return None
    defined = [j for j in range(labels.shape[1]) if len(np.unique(labels[:, j])) == 2]
    rows = [[auc(per_attr[a][n][:, j], labels[:, j]) for n in names] for a in ("sex", "age") for j in defined]
    chi2, p = friedman(RankTable(np.array(rows), names))
    return {"chi2": chi2, "p": p, "n_tasks": len(rows), "k": len(names), "attributes": ["sex", "age"]}


def stats_stage(cfg: RunConfig, layout: RunLayout) -> dict:
    split = load_split(layout, cfg.seed)
    labels = findings_matrix(split.test)
    groups = attribute_vector(split.test, cfg.attribute)
    out = layout.stats_dir(cfg.attribute)
    out.mkdir(parents=True, exist_ok=True)
    probs = _available_evals(cfg, layout)
    summary: dict = {"delong": None, "bootstrap": None, "friedman": None, "nemenyi": None, "ssim": None}

    if "original" in probs:
        base = probs["original"]
        delong_rows = []
        for name, p in probs.items():
            if name == "original":
                continue
            for j, finding in enumerate(FINDINGS):
                if len(np.unique(labels[:, j])) < 2:
                    continue
                res = delong_test(p[:, j], base[:, j], labels[:, j])
                delong_rows.append({"strategy": name, "finding": finding, "delta": res.estimate, "p": res.p_value})
        # BH runs over the findings of one strategy at a time
        for name in {r["strategy"] for r in delong_rows}:
            rows = [r for r in delong_rows if r["strategy"] == name]
            for r, q in zip(rows, benjamini_hochberg([r["p"] for r in rows])):
                r["p_bh"] = float(q)
        _write_rows(out / "delong.csv", delong_rows, ("strategy", "finding", "delta", "p", "p_bh"))
        summary["delong"] = delong_rows

        boot_rows = []
        for name, p in probs.items():
            if name == "original":
                continue
            for key in METRIC_KEYS:
                res = bootstrap_paired(_macro_metric(key), p, base, labels, n_boot=max(100, cfg.stats.n_boot), seed=cfg.seed)
                boot_rows.append(
                    {"strategy": name, "metric": key, "estimate": res.estimate,
                     "ci_lo": res.ci_lo, "ci_hi": res.ci_hi, "p": res.p_value}
                )
        _write_rows(out / "bootstrap.csv", boot_rows, ("strategy", "metric", "estimate", "ci_lo", "ci_hi", "p"))
        summary["bootstrap"] = boot_rows

    if len(probs) >= 3:
        names = list(probs)
        defined = [j for j in range(labels.shape[1]) if len(np.unique(labels[:, j])) == 2]
        auc_table = np.array([[auc(probs[n][:, j], labels[:, j]) for n in names] for j in defined])
        fr = {}
        table = RankTable(auc_table, names, [FINDINGS[j] for j in defined])
        chi2, p = friedman(table)
        fr["roc_auc"] = {"chi2": chi2, "p": p, "n_tasks": table.n_tasks, "k": table.k}
        worst, sd = [], []
        for j in defined:
            row_w, row_s = [], []
            for n in names:
                try:
                    with warnings.catch_warnings():
                        # one-class groups are expected for rare findings; exclusion is the rule
                        warnings.simplefilter("ignore")
                        rep = subgroup_fairness(probs[n][:, j], labels[:, j], groups)
                    row_w.append(rep.per_finding[0].min_auc)
                    row_s.append(rep.per_finding[0].sd)
                except FairnessUndefined:
                    row_w, row_s = None, None
                    break
            if row_w is not None:
                worst.append(row_w)
                sd.append(row_s)
        for key, rows, better in (("worst_case_auc", worst, True), ("auc_sd", sd, False)):
            if len(rows) >= 2:
                c, pv = friedman(RankTable(np.array(rows), names, higher_is_better=better))
                fr[key] = {"chi2": c, "p": pv, "n_tasks": len(rows), "k": len(names)}
        pooled = _pooled_friedman(cfg, layout, labels)
        if pooled is not None:
            fr["roc_auc_pooled"] = pooled
        summary["friedman"] = fr
        _write_json(out / "friedman.json", fr)
        if 2 <= len(names) <= 10:
            nem = nemenyi(table, cfg.stats.nemenyi_alpha)
            summary["nemenyi"] = cd_payload(nem)
            _write_json(out / "cd.json", summary["nemenyi"])

    table4 = []
    for name in probs:
        f = layout.eval_dir(cfg.attribute, name) / "fairness.json"
        if f.exists():
            med = json.loads(f.read_text())["median"]
            table4.append({"method": name, "attribute": cfg.attribute, "worst_case_auc": med["min_auc"],
                           "auc_gap": med["gap"], "auc_sd": med["sd"]})
    if table4:
        write_table4(table4, out / "fairness_table4.csv")

    edited_index = layout.edited_dir(cfg.attribute, "test") / "index.json"
    if edited_index.exists():
        edited = read_edited(edited_index.parent)
        patch = min(cfg.stats.ssim_patch, edited.stack(edited.alphas[0]).shape[-1])
        curve, pearson = ssim_alpha_table(edited, patch, cfg.stats.ssim_images, cfg.encoder_kind)
        _write_rows(out / "ssim_alpha.csv", curve, ("direction", "alpha", "mean_ssim", "n"))
        _write_rows(out / "ssim_pearson.csv", pearson, ("attribute", "direction", "encoder", "r", "p"))
        summary["ssim"] = pearson
    _write_json(out / "summary.json", summary)
    return {"sections": {k: v is not None for k, v in summary.items()}}


# ---------------------------------------------------------------------------
# explanations


def gradcam_stage(cfg: RunConfig, layout: RunLayout) -> dict:
    judge = JudgeCheckpoint.load(require(layout.judge_ckpt, "train-judge"))
    edited = read_edited(require(layout.edited_dir(cfg.attribute, "test") / "index.json", "generate").parent)
    target = ("sex", "age").index(cfg.explain.target if cfg.explain.target != "age_bin" else "age")
    layer = cfg.explain.layer or None
    out = layout.gradcam_dir(cfg.attribute)
    out.mkdir(parents=True, exist_ok=True)
    probs = {}
    for i in range(min(cfg.explain.n_images, len(edited))):
        image_id = edited.index[i][0]
        maps, seq = [], []
        for a in edited.alphas:
            img = edited.stack(a)[i]
            heat = gradcam(judge.model, img, target, layer)
            save_overlay(img, heat, out / f"{image_id}_alpha_{a:.1f}.png")
            maps.append(heat.grid[None].astype(np.float32))
            seq.append(heat.model_probability)
        write_array(np.stack(maps), out / f"{image_id}_maps.npy")
        probs[image_id] = dict(zip([f"{a:.1f}" for a in edited.alphas], seq))
        print(image_id, " ".join(f"{p:.3f}" for p in seq))
    _write_json(out / "probabilities.json", probs)
    return {"images": list(probs)}


# ---------------------------------------------------------------------------
# report


LEAKAGE_FIELDS = ("alpha", "auc", "acc", "sen", "spe", "f1")


def _read_csv(path: Path) -> list[dict] | None:
    if not path.exists():
        return None
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(v):
    if v in ("", None):
        return None
    try:
        return float(v)
    except ValueError:
        return v


def report(cfg: RunConfig, layout: RunLayout, plots: bool = False) -> dict:
    """Consolidate whatever exists in the run into report/; missing sections are null."""
    out = layout.report_dir
    out.mkdir(parents=True, exist_ok=True)
    attr = cfg.attribute
    sections: dict = {}

    leak = _read_csv(layout.audit_dir(attr) / "leakage.csv")
    sections["leakage"] = None if leak is None else [{k: _num(r[k]) for k in LEAKAGE_FIELDS} for r in leak]
    if leak is not None:
        write_leakage_csv(sections["leakage"], out / "leakage.csv")
    roc = _read_csv(layout.audit_dir(attr) / "roc_points.csv")
    sections["roc_points"] = None if roc is None else len(roc)
    if roc is not None:
        _write_rows(out / "roc_points.csv", roc, ("alpha", "threshold", "fpr", "tpr"))

    per_finding, macro, fairness_rows = [], {}, []
    for s in cfg.strategies():
        m = layout.eval_dir(attr, s.name) / "metrics.json"
        if m.exists():
            rep = json.loads(m.read_text())
            macro[s.name] = rep["macro"]
            for finding, vals in rep["per_finding"].items():
                per_finding.append({"strategy": s.name, "finding": finding, "roc_auc": vals["roc_auc"]})
        f = layout.eval_dir(attr, s.name) / "fairness.json"
        if f.exists():
            med = json.loads(f.read_text())["median"]
            fairness_rows.append({"method": s.name, "attribute": attr, "worst_case_auc": med["min_auc"],
                                  "auc_gap": med["gap"], "auc_sd": med["sd"]})
    sections["macro"] = macro or None
    sections["per_finding_auc"] = per_finding or None
    sections["fairness"] = fairness_rows or None
    if per_finding:
        _write_rows(out / "per_finding_auc.csv", per_finding, ("strategy", "finding", "roc_auc"))
    if fairness_rows:
        write_table4(fairness_rows, out / "fairness_table4.csv")

    cd = layout.stats_dir(attr) / "cd.json"
    sections["cd"] = json.loads(cd.read_text()) if cd.exists() else None
    if sections["cd"] is not None:
        _write_json(out / "cd.json", sections["cd"])
    summary = layout.stats_dir(attr) / "summary.json"
    stats = json.loads(summary.read_text()) if summary.exists() else {}
    for key in ("delong", "bootstrap", "friedman", "ssim"):
        sections[key] = stats.get(key)
    cohort = layout.cohort
    sections["cohort"] = json.loads(cohort.read_text()) if cohort.exists() else None

    payload = {"attribute": attr, "config_hash": cfg.hash(), "sections": sections}
    _write_json(out / "report.json", payload)
    if plots:
        _plots(sections, out)
    return {"sections": {k: v is not None for k, v in sections.items()}}


def _plots(sections: dict, out: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if sections.get("leakage"):
        rows = sections["leakage"]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for k in LEAKAGE_FIELDS[1:]:
            ax.plot([r["alpha"] for r in rows], [r[k] for r in rows], marker="o", label=k.upper())
        ax.set_xlabel("alpha")
        ax.set_ylabel("metric")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out / "leakage.png", dpi=120)
        plt.close(fig)
    if sections.get("per_finding_auc"):
        rows = [r for r in sections["per_finding_auc"] if r["roc_auc"] is not None]
        names = sorted({r["strategy"] for r in rows})
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.violinplot([[r["roc_auc"] for r in rows if r["strategy"] == n] for n in names], showmedians=True)
        ax.set_xticks(range(1, len(names) + 1), names, rotation=20, fontsize=7)
        ax.set_ylabel("ROC-AUC")
        fig.tight_layout()
        fig.savefig(out / "per_finding_auc.png", dpi=120)
        plt.close(fig)
