"""FastAPI application wrapping the core package.

``/translate`` and ``/score`` speak the backend wire protocol with the
deterministic stubs, so a local server can stand in for real MT and QE
services during pipeline runs.
"""

from __future__ import annotations

import json
from typing import List

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..backends import StubScorer, StubTranslator, make_scorer
from ..cleaning import run_clean_pipeline
from ..corpus import ConfigError, RecordError, SentencePair
from ..lang_registry import TagParseError, format_tag, get_registry, parse_tag
from ..perturb import PerturbationError, PerturbationKind, PerturbationPlan, apply_perturbations
from ..pipeline import SYNTH_TASKS, Resources, RunConfig, SynthSpec, Synthesizer, score_report
from . import schemas


def _tag(text: str):
    try:
        return parse_tag(text)
    except TagParseError as e:
        raise HTTPException(status_code=422, detail=str(e)) from None


def create_app(lexicons: str = None) -> FastAPI:
    app = FastAPI(title="corpusforge", version=__version__)
    translator, scorer = StubTranslator(), StubScorer()
    # lexicons and tries are loaded once and shared by every request
    res = Resources(lexicons)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/v1/languages", response_model=List[schemas.LanguageOut])
    def languages():
        return [
            schemas.LanguageOut(
                id=info.id,
                tag=format_tag(info.tag),
                family=info.tag.family,
                code=info.tag.code,
                script=info.tag.script,
                display_name=info.display_name,
            )
            for info in get_registry().entries
        ]

    @app.post("/translate", response_model=schemas.TranslateResponse)
    def translate(req: schemas.TranslateRequest):
        return {"texts": translator.translate(req.texts, _tag(req.src), _tag(req.tgt))}

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest):
        return {"scores": scorer.score(req.pairs, _tag(req.src), _tag(req.tgt))}

    @app.post("/v1/perturb", response_model=schemas.PerturbResponse)
    def perturb(req: schemas.PerturbRequest):
        tag = _tag(req.tag)
        try:
            kinds = tuple(PerturbationKind(k) for k in req.kinds) or res.available_kinds(tag)
            plan = PerturbationPlan(kinds, req.rate, req.seed, tag)
            out, elog = apply_perturbations(req.text, plan, res.lexicons, res.trie(tag))
        except (PerturbationError, ValueError) as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        return {"original": req.text, "perturbed": out, "log": elog.to_json()}

    @app.post("/v1/records/{task}", response_model=schemas.TaskRecordOut)
    def record(task: str, req: schemas.RecordRequest):
        if task not in SYNTH_TASKS:
            raise HTTPException(status_code=404, detail=f"unknown task {task!r}; choose from {list(SYNTH_TASKS)}")
        cfg = RunConfig(
            command="synth", task=task, rate=req.rate, kinds=tuple(req.kinds), seed=req.seed,
            src_tag=req.src_tag, tgt_tag=req.tgt_tag,
        )
        try:
            cfg.validate()
            pair = SentencePair(req.id, _tag(req.src_tag), _tag(req.tgt_tag), req.src, req.tgt, req.domain)
            if task in ("da", "qe"):
                base = req.base_quality
                if base is None:
                    got = scorer.score([(pair.src_text, pair.tgt_text)], pair.src_tag, pair.tgt_tag)[0]
                    base = max(1.0, min(100.0, got))
                pair = pair.with_score(base)
            spec = SynthSpec(task, req.seed, cfg.task_rate(), tuple(req.kinds), None, req.literal_da)
            line, reason = Synthesizer(spec, res).one(pair)
        except (ConfigError, RecordError, PerturbationError) as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        if line is None:
            raise HTTPException(status_code=422, detail=f"record skipped: {reason}")
        return json.loads(line)

    @app.post("/v1/metrics")
    def metrics(req: schemas.MetricsRequest):
        if len(req.hyp) != len(req.ref):
            raise HTTPException(status_code=422, detail="hyp and ref differ in length")
        return score_report([{"hyp": h, "ref": r} for h, r in zip(req.hyp, req.ref)])

    @app.post("/v1/clean", response_model=schemas.CleanResponse)
    def clean(req: schemas.CleanRequest):
        src, tgt = _tag(req.src_tag), _tag(req.tgt_tag)
        cfg = RunConfig(
            command="clean", stages=tuple(req.stages), max_word_delta=req.max_word_delta,
            max_char_delta=req.max_char_delta, qe_margin=req.qe_margin, scorer=req.scorer,
            src_tag=req.src_tag, tgt_tag=req.tgt_tag,
        )
        try:
            cfg.validate()
            pairs = [SentencePair(p.id, src, tgt, p.src, p.tgt, score=p.score) for p in req.pairs]
            sc = make_scorer(req.scorer) if "qe_score" in req.stages else None
            result = run_clean_pipeline(pairs, cfg.policy(), scorer=sc)
        except (ConfigError, RecordError) as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        return {
            "verdicts": [v.to_json() for v in result.verdicts],
            "stats": result.stats.to_json(),
            "thresholds": result.thresholds,
        }

    return app
