"""Word-error-rate computation and per-demographic-group fairness reports.

WER here is pooled (token-weighted): total substitutions, deletions, and
insertions over a group divided by total reference tokens. That choice
changes group numbers versus per-utterance averaging, so it is stated
prominently: every aggregate in this module is pooled.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal

import numpy as np

from .errors import DataError, NumericError, UsageError
from .randstream import rng_from


@dataclass(frozen=True)
class EvalUtterance:
    """Reference and hypothesis tokens plus demographic axis labels."""

    utt_id: str
    ref_tokens: tuple[str, ...]
    hyp_tokens: tuple[str, ...]
    groups: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class AlignmentStats:
    """Substitution/deletion/insertion counts of a minimal edit alignment."""

    S: int
    D: int
    I: int
    n_ref: int

    def __post_init__(self) -> None:
        if min(self.S, self.D, self.I, self.n_ref) < 0 or self.S + self.D > self.n_ref:
            raise DataError(f"inconsistent alignment counts: {self}")

    @property
    def distance(self) -> int:
        return self.S + self.D + self.I


@dataclass(frozen=True)
class ReportRow:
    axis: str
    label: str
    baseline_wer: float
    cluster_wer: float
    rel_diff: float | None
    n_utts: int


@dataclass(frozen=True)
class GroupReport:
    rows: tuple[ReportRow, ...]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class BootstrapResult:
    mean_delta: float
    ci_low: float
    ci_high: float
    p_value: float


def tokenize(text: str, normalize: bool = True) -> tuple[str, ...]:
    """Case-fold, split on whitespace, strip edge punctuation per token.

    Tokens that are pure punctuation vanish. Pass normalize=False to split
    on whitespace only.
    """
    if not normalize:
        return tuple(text.split())
    tokens = []
    for tok in text.casefold().split():
        tok = tok.strip(string.punctuation)
        if tok:
            tokens.append(tok)
    return tuple(tokens)


def edit_align(ref_tokens: tuple[str, ...], hyp_tokens: tuple[str, ...]) -> AlignmentStats:
    """Minimal unit-cost alignment; ties prefer substitution over deletion over insertion.

    The dynamic program minimizes (edit cost, match count) lexicographically.
    At a fixed minimal cost, fewer matches means more substitutions, which is
    exactly the stated preference; deletions and insertions are then forced
    by the token counts: S = n+m-2*matches-cost, D = n-matches-S,
    I = m-matches-S.
    """
    ref, hyp = tuple(ref_tokens), tuple(hyp_tokens)
    n, m = len(ref), len(hyp)
    prev_cost = list(range(m + 1))
    prev_match = [0] * (m + 1)
    for i in range(1, n + 1):
        cur_cost = [i] + [0] * m
        cur_match = [0] * (m + 1)
        for j in range(1, m + 1):
            eq = ref[i - 1] == hyp[j - 1]
            best_cost = prev_cost[j - 1] + (0 if eq else 1)
            best_match = prev_match[j - 1] + (1 if eq else 0)
            for cand_cost, cand_match in (
                (prev_cost[j] + 1, prev_match[j]),      # deletion
                (cur_cost[j - 1] + 1, cur_match[j - 1]),  # insertion
            ):
                if (cand_cost, cand_match) < (best_cost, best_match):
                    best_cost, best_match = cand_cost, cand_match
            cur_cost[j], cur_match[j] = best_cost, best_match
        prev_cost, prev_match = cur_cost, cur_match
    cost, matches = prev_cost[m], prev_match[m]
    subs = n + m - 2 * matches - cost
    return AlignmentStats(S=subs, D=n - matches - subs, I=m - matches - subs, n_ref=n)


def corpus_wer(utterances: list[EvalUtterance]) -> float:
    """Pooled WER: total edit errors over total reference tokens; may exceed 1."""
    total_ref = sum(len(u.ref_tokens) for u in utterances)
    if total_ref == 0:
        raise DataError("corpus has zero total reference tokens")
    total_errors = sum(edit_align(u.ref_tokens, u.hyp_tokens).distance for u in utterances)
    return total_errors / total_ref


def relative_diff(wer_baseline: float, wer_treatment: float) -> float:
    """100 * (baseline - treatment) / baseline; positive means improvement."""
    if wer_baseline <= 0:
        raise NumericError(f"baseline WER must be positive, got {wer_baseline}")
    return 100.0 * (wer_baseline - wer_treatment) / wer_baseline


def display_rel_diff(value: float) -> str:
    """Truncate toward zero at 2 decimals, the convention of the reports."""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_DOWN))


def _pair_systems(
    baseline: list[EvalUtterance], treatment: list[EvalUtterance]
) -> list[tuple[EvalUtterance, EvalUtterance]]:
    by_id = {u.utt_id: u for u in treatment}
    if len(by_id) != len(treatment):
        raise DataError("duplicate utt_id in treatment")
    base_ids = [u.utt_id for u in baseline]
    if len(set(base_ids)) != len(base_ids):
        raise DataError("duplicate utt_id in baseline")
    if set(base_ids) != set(by_id):
        missing = set(base_ids) ^ set(by_id)
        raise DataError(f"utt_id mismatch between systems (e.g. {sorted(missing)[:3]})")
    pairs = []
    for b in baseline:
        t = by_id[b.utt_id]
        if b.ref_tokens != t.ref_tokens:
            raise DataError(f"utt_id {b.utt_id!r}: reference differs between systems")
        if b.groups != t.groups:
            raise DataError(f"utt_id {b.utt_id!r}: group labels differ between systems")
        pairs.append((b, t))
    return pairs


def group_report(
    baseline: list[EvalUtterance], treatment: list[EvalUtterance], axes: list[str]
) -> GroupReport:
    """Per-axis, per-label pooled WERs with relative differences.

    Rows are ordered by the given axes, labels by first appearance.
    Utterances missing an axis are excluded from that axis with a counted
    warning; a label whose baseline WER is zero gets rel_diff None and a
    warning instead of an error, so one perfect subgroup cannot sink a
    whole report.
    """
    pairs = _pair_systems(baseline, treatment)
    rows: list[ReportRow] = []
    warnings: list[str] = []
    for axis in axes:
        labelled = [(b, t) for b, t in pairs if axis in b.groups]
        skipped = len(pairs) - len(labelled)
        if skipped:
            warnings.append(f"axis {axis!r}: {skipped} utterances missing the axis, excluded")
        labels: list[str] = []
        for b, _ in labelled:
            if b.groups[axis] not in labels:
                labels.append(b.groups[axis])
        for label in labels:
            subset = [(b, t) for b, t in labelled if b.groups[axis] == label]
            wer_b = corpus_wer([b for b, _ in subset]) * 100.0
            wer_t = corpus_wer([t for _, t in subset]) * 100.0
            if wer_b > 0:
                rel: float | None = relative_diff(wer_b, wer_t)
            else:
                rel = None
                warnings.append(f"axis {axis!r} label {label!r}: zero baseline WER, rel_diff undefined")
            rows.append(ReportRow(axis, label, wer_b, wer_t, rel, len(subset)))
    return GroupReport(tuple(rows), tuple(warnings))


def paired_bootstrap(
    baseline: list[EvalUtterance],
    treatment: list[EvalUtterance],
    resamples: int = 1000,
    seed: int = 0,
    confidence: float = 0.95,
) -> BootstrapResult:
    """Paired percentile bootstrap of the pooled WER difference.

    Delta is baseline minus treatment in WER percentage points, so positive
    means the treatment is better, matching relative_diff's sign. Each
    resample draws utterances with replacement (paired) using a seed derived
    from (seed, resample index), making the result independent of worker
    count. The two-sided p-value is the doubled fraction of resamples whose
    delta's sign opposes the point estimate, counting exact zeros as half.
    """
    if resamples < 100:
        raise UsageError(f"resamples must be at least 100, got {resamples}")
    if not (0.0 < confidence < 1.0):
        raise UsageError(f"confidence must be in (0, 1), got {confidence}")
    pairs = _pair_systems(baseline, treatment)
    if not pairs:
        raise DataError("no utterances to resample")
    n_ref = np.array([len(b.ref_tokens) for b, _ in pairs], dtype=np.float64)
    if (n_ref == 0).any():
        raise DataError("bootstrap requires every utterance to have reference tokens")
    err_b = np.array([edit_align(b.ref_tokens, b.hyp_tokens).distance for b, _ in pairs], float)
    err_t = np.array([edit_align(t.ref_tokens, t.hyp_tokens).distance for _, t in pairs], float)

    point = 100.0 * (err_b.sum() - err_t.sum()) / n_ref.sum()
    n = len(pairs)
    deltas = np.empty(resamples)
    for r in range(resamples):
        idx = rng_from(seed, r).integers(0, n, n)
        deltas[r] = 100.0 * (err_b[idx].sum() - err_t[idx].sum()) / n_ref[idx].sum()

    alpha = (1.0 - confidence) / 2.0
    ci_low, ci_high = np.percentile(deltas, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    if point == 0.0:
        p_value = 1.0
    else:
        opposite = (deltas < 0).sum() if point > 0 else (deltas > 0).sum()
        p_value = min(1.0, 2.0 * (opposite + 0.5 * (deltas == 0).sum()) / resamples)
    return BootstrapResult(float(deltas.mean()), float(ci_low), float(ci_high), float(p_value))


def load_eval_utterances(path: str, normalize: bool = True) -> list[EvalUtterance]:
    """Read line-delimited records with utt_id, ref, hyp, optional groups."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read hypothesis file {path}: {exc}") from exc
    utterances: list[EvalUtterance] = []
    seen: set[str] = set()
    with fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise DataError(f"{path}: line {line_no}: malformed record: {exc}") from exc
            if not isinstance(obj, dict) or not isinstance(obj.get("utt_id"), str):
                raise DataError(f"{path}: line {line_no}: missing utt_id")
            if obj["utt_id"] in seen:
                raise DataError(f"{path}: line {line_no}: duplicate utt_id {obj['utt_id']!r}")
            seen.add(obj["utt_id"])
            if not isinstance(obj.get("ref"), str) or not isinstance(obj.get("hyp"), str):
                raise DataError(f"{path}: line {line_no}: ref and hyp must be strings")
            groups = obj.get("groups", {})
            if not isinstance(groups, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in groups.items()
            ):
                raise DataError(f"{path}: line {line_no}: groups must map strings to strings")
            utterances.append(
                EvalUtterance(
                    obj["utt_id"],
                    tokenize(obj["ref"], normalize),
                    tokenize(obj["hyp"], normalize),
                    dict(groups),
                )
            )
    return utterances


def save_report(report: GroupReport, path: str) -> None:
    """CSV with header axis,label,baseline_wer,cluster_wer,rel_diff,n_utts.

    WER columns carry full float precision; rel_diff uses the truncated
    2-decimal display form (blank when undefined).
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("axis,label,baseline_wer,cluster_wer,rel_diff,n_utts\n")
        for row in report.rows:
            rel = display_rel_diff(row.rel_diff) if row.rel_diff is not None else ""
            fh.write(
                f"{row.axis},{row.label},{row.baseline_wer!r},{row.cluster_wer!r},{rel},{row.n_utts}\n"
            )
