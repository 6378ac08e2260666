"""Scripted generator + PRM service speaking the HTTP backend's payloads.

Used by the contract tests and for end-to-end runs without a model server.
"""
from __future__ import annotations

import re
import threading
import time
from typing import Any, Dict, List, Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response
from prometheus_client import CONTENT_TYPE_LATEST, Counter, generate_latest
from pydantic import BaseModel, Field

from . import __version__
from .config import LOG_LEVEL, MOCK_ANSWER_AT, STEP_DELIMITER
from .logging_setup import configure
from .metrics import REGISTRY

log = configure(LOG_LEVEL)
app = FastAPI(title="poolsearch mock generator/scorer")

VERSION = {"version": __version__, "build": "local"}
started_at = time.time()

MOCK_REQUESTS_TOTAL = Counter("mock_requests_total", "Mock service requests", ["endpoint"], registry=REGISTRY)

ANSWER = "42"
_SCORE_MARK = re.compile(r"score=([0-9]*\.?[0-9]+)")
_BOXED = re.compile(r"\\boxed\{(.+?)\}")


# ------------------------------- Payloads ------------------------------------
class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str = "mock"
    messages: List[ChatMessage]
    temperature: float = 0.7
    max_tokens: int = 512
    n: int = Field(1, ge=1)
    logprobs: bool = False
    stop: List[str] = Field(default_factory=list)
    continue_final_message: bool = False
    add_generation_prompt: bool = True


class ScoreBody(BaseModel):
    model: str = "mock-prm"
    problem: str = ""
    steps: List[str]


class FaultPlan(BaseModel):
    status: int = Field(500, ge=400, le=599)
    count: int = Field(1, ge=0)


# ------------------------------- Fault injection -----------------------------
_FAULTS: Dict[str, int] = {"status": 500, "count": 0}
_LOCK = threading.Lock()


def _take_fault() -> Optional[int]:
    with _LOCK:
        if _FAULTS["count"] > 0:
            _FAULTS["count"] -= 1
            return _FAULTS["status"]
    return None


def _fault_response(status: int) -> JSONResponse:
    return JSONResponse({"error": "injected fault", "status": status}, status_code=status)


# ---------------------------------- Helpers ----------------------------------
def _steps_so_far(req: ChatRequest, delimiter: str) -> int:
    if not req.messages or req.messages[-1].role != "assistant":
        return 0
    return len([s for s in req.messages[-1].content.split(delimiter) if s.strip()])


def _logprobs(content: str) -> Dict[str, Any]:
    words = content.split(" ")
    tokens = [w + (" " if i < len(words) - 1 else "") for i, w in enumerate(words)]
    return {"content": [{"token": tok, "logprob": -0.1 * (1 + i % 3)} for i, tok in enumerate(tokens)]}


def _choice(index: int, step_no: int, delimiter: str, with_logprobs: bool) -> Dict[str, Any]:
    if step_no >= MOCK_ANSWER_AT:
        content = f"The answer is \\boxed{{{ANSWER}}}."
        choice = {"index": index, "message": {"role": "assistant", "content": content},
                  "finish_reason": "stop", "stop_reason": None}
    else:
        content = f"Step {step_no}.{index}: reduce the problem."
        choice = {"index": index, "message": {"role": "assistant", "content": content},
                  "finish_reason": "stop", "stop_reason": delimiter}
    if with_logprobs:
        choice["logprobs"] = _logprobs(content)
    return choice


def _step_score(step: str) -> float:
    m = _SCORE_MARK.search(step)
    if m:
        return float(m.group(1))
    if _BOXED.search(step):
        return 0.95
    return 0.5


# ---------------------------------- Routes -----------------------------------
@app.get("/health")
def health():
    return {"status": "ok", "uptime_s": round(time.time() - started_at, 1), **VERSION}


@app.get("/metrics")
def metrics():
    return Response(generate_latest(REGISTRY), media_type=CONTENT_TYPE_LATEST)


@app.post("/mock/faults")
def set_faults(plan: FaultPlan):
    with _LOCK:
        _FAULTS.update(plan.model_dump())
    log.info("mock faults: next %d requests answer %d", plan.count, plan.status)
    return {"ok": True, **plan.model_dump()}


@app.post("/v1/chat/completions")
def chat_completions(req: ChatRequest):
    MOCK_REQUESTS_TOTAL.labels("generator").inc()
    status = _take_fault()
    if status is not None:
        return _fault_response(status)
    delimiter = req.stop[0] if req.stop else STEP_DELIMITER
    step_no = _steps_so_far(req, delimiter) + 1
    choices = [_choice(i, step_no, delimiter, req.logprobs) for i in range(req.n)]
    completion_tokens = sum(len(c["message"]["content"].split(" ")) for c in choices)
    prompt_tokens = sum(len(m.content.split(" ")) for m in req.messages)
    return {
        "id": f"mock-{int(time.time() * 1000)}",
        "object": "chat.completion",
        "model": req.model,
        "choices": choices,
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
    }


@app.post("/v1/score")
def score(body: ScoreBody):
    MOCK_REQUESTS_TOTAL.labels("scorer").inc()
    status = _take_fault()
    if status is not None:
        return _fault_response(status)
    return {"model": body.model, "step_scores": [_step_score(s) for s in body.steps]}
