"""Recognition-accuracy comparison between human and synthetic episodes."""

from __future__ import annotations

from ..episodes import EpisodeRecord, StructuralError
from ..evaluation import MetricReport, score_recognition
from ..inference import InferenceParams, simple_infer


def _config_key(record: EpisodeRecord):
    cfg = record.config
    return (
        cfg.layout.layout_id,
        tuple(sorted((a, g.key()) for a, g in cfg.goals.items())),
        cfg.social.alpha,
    )


def evaluate_human_vs_synthetic(
    human_records: list,
    synthetic_records: list,
    params: InferenceParams = InferenceParams(),
    mode: str = "full",
) -> dict:
    """Run inference on matched record sets; report accuracy deltas."""
    if len(human_records) != len(synthetic_records):
        raise StructuralError("record sets must be pairwise matched")
    for h, s in zip(human_records, synthetic_records):
        if _config_key(h) != _config_key(s):
            raise StructuralError(
                f"unmatched scenario configs: {h.config.seed} vs "
                f"{s.config.seed}"
            )
    reports = {}
    for name, records in (("human", human_records),
                          ("synthetic", synthetic_records)):
        report = MetricReport()
        for rec in records:
            result = simple_infer(rec, params, mode=mode)
            report.add(score_recognition(rec, result.posterior))
        reports[name] = report
    human = reports["human"].summary()
    synth = reports["synthetic"].summary()
    deltas = {}
    for stratum in ("all", "independent", "social"):
        deltas[stratum] = {
            k: (
                None
                if human[stratum][k] is None or synth[stratum][k] is None
                else human[stratum][k] - synth[stratum][k]
            )
            for k in ("top1", "top2", "top3", "relation")
        }
    return {"human": human, "synthetic": synth, "delta": deltas}
