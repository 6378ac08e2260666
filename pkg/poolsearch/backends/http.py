from __future__ import annotations
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import httpx
from tenacity import (
    RetryCallState, Retrying, retry_if_exception, stop_after_attempt, wait_exponential,
)

from ..core.scoring import clamp_score
from ..errors import BackendError, BackendTimeout, MalformedResponse, ServiceError
from ..metrics import HTTP_RETRIES_TOTAL
from ..models import Child, HttpBackendConfig, Prefix
from .base import Backend, ExpansionRequest, ScoreRequest

log = logging.getLogger(__name__)


def _retryable(exc: BaseException) -> bool:
    return isinstance(exc, BackendError) and bool(exc.retryable)


def _normalize_answer(ans: Optional[str]) -> str:
    return re.sub(r"\s+", "", (ans or "")).strip().lower()


class HttpBackend(Backend):
    """Generator + PRM scorer behind HTTP services, bound to one problem.

    Payloads are documented in README.md (chat-completions style generator,
    `{model, problem, steps}` scorer).
    """

    def __init__(
        self,
        cfg: HttpBackendConfig,
        problem: str,
        *,
        reference_answer: Optional[str] = None,
        client: Optional[httpx.Client] = None,
    ) -> None:
        self.cfg = cfg
        self.problem = problem
        self.reference_answer = reference_answer
        self._own_client = client is None
        self.client = client or httpx.Client(timeout=cfg.timeout_s)
        self._answer_re = re.compile(cfg.answer_pattern)
        self._lock = threading.Lock()
        self.retries = 0

    def close(self) -> None:
        if self._own_client:
            self.client.close()

    # ------------------------------ transport --------------------------------
    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = self.cfg.bearer_token()
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _count_retry(self, endpoint: str):
        def _before_sleep(state: RetryCallState) -> None:
            with self._lock:
                self.retries += 1
            HTTP_RETRIES_TOTAL.labels(endpoint).inc()
            exc = state.outcome.exception() if state.outcome else None
            log.warning("%s attempt %d failed (%s); retrying", endpoint, state.attempt_number, exc)
        return _before_sleep

    def _post_once(self, url: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        try:
            r = self.client.post(url, json=payload, headers=self._headers(), timeout=self.cfg.timeout_s)
        except httpx.TimeoutException as e:
            raise BackendTimeout(f"{url}: {e}") from e
        except httpx.TransportError as e:
            raise ServiceError(503, f"{url}: {e}") from e
        if r.status_code >= 400:
            raise ServiceError(r.status_code, r.text[:200])
        try:
            body = r.json()
        except ValueError as e:
            raise MalformedResponse(f"{url}: body is not JSON") from e
        if not isinstance(body, dict):
            raise MalformedResponse(f"{url}: expected a JSON object")
        return body

    def _call(self, endpoint: str, url: str, payload: Dict[str, Any], parse):
        retrying = Retrying(
            stop=stop_after_attempt(self.cfg.max_retries + 1),
            wait=wait_exponential(multiplier=self.cfg.backoff_s, max=max(self.cfg.backoff_s * 16, 0.0)),
            retry=retry_if_exception(_retryable),
            before_sleep=self._count_retry(endpoint),
            reraise=True,
        )
        for attempt in retrying:
            with attempt:
                return parse(self._post_once(url, payload))

    # ------------------------------ generator --------------------------------
    def _prefix_text(self, path: Sequence[Any]) -> str:
        return "".join(str(s) + self.cfg.step_delimiter for s in path)

    def _parse_choice(self, choice: Dict[str, Any], path: Sequence[Any], depth: int,
                      tokens_hint: Optional[int]) -> Child:
        try:
            content = choice["message"]["content"]
        except (KeyError, TypeError) as e:
            raise MalformedResponse("choice without message.content") from e
        if not isinstance(content, str):
            raise MalformedResponse("message.content is not a string")

        delim = self.cfg.step_delimiter
        cut = content.find(delim)
        step = content if cut < 0 else content[:cut]
        saw_delimiter = cut >= 0 or choice.get("stop_reason") == delim

        match = self._answer_re.search(step)
        eos = choice.get("finish_reason") == "stop" and not saw_delimiter
        terminal = bool(match) or eos
        answer = None
        if terminal:
            if match:
                answer = match.group(1).strip()
            else:
                found = self._answer_re.findall(self._prefix_text(path) + step)
                answer = found[-1].strip() if found else step.strip()

        logprob, tokens = self._step_logprob(choice, len(step))
        return Child(step=step, depth=depth, step_logprob=logprob, terminal=terminal,
                     answer=answer, tokens=tokens if tokens is not None else tokens_hint)

    @staticmethod
    def _step_logprob(choice: Dict[str, Any], n_chars: int) -> Tuple[Optional[float], Optional[int]]:
        """Sum of token log-probabilities covering the kept step text."""
        lp = choice.get("logprobs") or {}
        items = lp.get("content") if isinstance(lp, dict) else None
        if not items:
            return None, None
        total, seen, used = 0.0, 0, 0
        for item in items:
            if seen >= n_chars and used > 0:
                break
            try:
                total += float(item["logprob"])
            except (KeyError, TypeError, ValueError):
                return None, None
            seen += len(item.get("token") or "")
            used += 1
        return total, used

    def http_expand(self, prefix: Optional[Prefix], path: Sequence[Any], count: int,
                    temperature: float) -> List[Child]:
        depth = 1 if prefix is None else prefix.depth + 1
        messages = [{"role": "user", "content": self.problem}]
        prefix_text = self._prefix_text(path)
        if prefix_text:
            messages.append({"role": "assistant", "content": prefix_text})
        payload = {
            "model": self.cfg.generator_model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": self.cfg.max_tokens,
            "n": count,
            "logprobs": True,
            "stop": [self.cfg.step_delimiter],
            "continue_final_message": bool(prefix_text),
            "add_generation_prompt": not prefix_text,
        }

        def parse(body: Dict[str, Any]) -> List[Child]:
            choices = body.get("choices")
            if not isinstance(choices, list) or len(choices) < count:
                raise MalformedResponse(f"expected {count} choices, got {0 if not isinstance(choices, list) else len(choices)}")
            usage = body.get("usage") or {}
            hint = None
            if isinstance(usage.get("completion_tokens"), int):
                hint = usage["completion_tokens"] // max(count, 1)
            return [self._parse_choice(c, path, depth, hint) for c in choices[:count]]

        return self._call("generator", self.cfg.generator_url, payload, parse)

    # ------------------------------ scorer -----------------------------------
    def http_score(self, steps: Sequence[Any]) -> float:
        payload = {"model": self.cfg.scorer_model, "problem": self.problem, "steps": [str(s) for s in steps]}

        def parse(body: Dict[str, Any]) -> float:
            scores = body.get("step_scores")
            if not isinstance(scores, list) or not scores:
                raise MalformedResponse("step_scores missing or empty")
            try:
                last = float(scores[-1])
            except (TypeError, ValueError) as e:
                raise MalformedResponse("step score is not a number") from e
            return clamp_score(last)

        return self._call("scorer", self.cfg.scorer_url, payload, parse)

    # ------------------------------ Backend API ------------------------------
    def expand(self, parent, path, count, temperature, rng):
        return self.http_expand(parent, path, count, temperature)

    def score(self, child, path):
        return self.http_score(path)

    def _pooled(self, fn, items: Sequence[Any]) -> List[Any]:
        if len(items) <= 1 or self.cfg.max_concurrent == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=min(self.cfg.max_concurrent, len(items))) as ex:
            return list(ex.map(fn, items))   # map keeps request order

    def expand_batch(self, requests: Sequence[ExpansionRequest], temperature, rng):
        return self._pooled(lambda r: self.http_expand(r.parent, r.path, r.count, temperature), requests)

    def score_batch(self, requests: Sequence[ScoreRequest]):
        return self._pooled(lambda r: self.http_score(r.path), requests)

    def check_answer(self, answer):
        if self.reference_answer is None:
            return None
        return _normalize_answer(answer) == _normalize_answer(self.reference_answer)
