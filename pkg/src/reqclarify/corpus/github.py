"""Collect feature requests through the GitHub REST issues API."""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

import httpx

from ..exceptions import TransportError, UsageError
from .models import Comment, FeatureRequest

log = logging.getLogger(__name__)

API_URL = "https://api.github.com"
TOKEN_ENV = "REQCLARIFY_GH_TOKEN"


class GitHubClient:
    def __init__(self, token=None, *, base_url=API_URL, transport=None, max_retries=5,
                 backoff=1.0, max_in_flight=4, sleep=time.sleep, timeout=30.0):
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        headers = {"Accept": "application/vnd.github+json", "X-GitHub-Api-Version": "2022-11-28"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self.http = httpx.Client(base_url=base_url, headers=headers, transport=transport,
                                 timeout=timeout)
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_in_flight = max_in_flight
        self.sleep = sleep

    def close(self):
        self.http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _get(self, url, params=None) -> httpx.Response:
        for attempt in range(self.max_retries + 1):
            try:
                resp = self.http.get(url, params=params)
            except httpx.HTTPError as exc:
                if attempt == self.max_retries:
                    raise TransportError(f"GET {url} failed: {exc}") from exc
                self.sleep(self.backoff * 2 ** attempt)
                continue
            if _rate_limited(resp) or resp.status_code >= 500:
                if attempt == self.max_retries:
                    raise TransportError(
                        f"GET {url}: HTTP {resp.status_code} after {attempt + 1} attempts"
                    )
                wait = _retry_after(resp)
                self.sleep(wait if wait is not None else self.backoff * 2 ** attempt)
                continue
            if resp.status_code in (401, 403):
                raise TransportError(f"GET {url}: authentication failed (HTTP {resp.status_code})")
            if resp.status_code >= 400:
                raise TransportError(f"GET {url}: HTTP {resp.status_code}")
            return resp
        raise AssertionError("unreachable")

    def _paged(self, url, params=None):
        params = dict(params or {}, per_page=100)
        while url:
            resp = self._get(url, params=params)
            yield from resp.json()
            url = resp.links.get("next", {}).get("url")
            params = None  # the next link already carries the query

    def issues(self, repo, label):
        return list(self._paged(f"/repos/{repo}/issues", {"labels": label, "state": "all"}))

    def issue(self, repo, number):
        return self._get(f"/repos/{repo}/issues/{number}").json()

    def comments(self, repo, number):
        return list(self._paged(f"/repos/{repo}/issues/{number}/comments"))


def _rate_limited(resp) -> bool:
    if resp.status_code == 429:
        return True
    return resp.status_code == 403 and resp.headers.get("x-ratelimit-remaining") == "0"


def _retry_after(resp):
    value = resp.headers.get("retry-after")
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        return None


def _to_request(repo, item, comments) -> FeatureRequest:
    return FeatureRequest(
        repo=repo,
        issue_number=item["number"],
        title=item.get("title") or "",
        body=item.get("body") or "",
        author=(item.get("user") or {}).get("login", ""),
        created_at=item["created_at"],
        closed_at=item.get("closed_at"),
        state=item.get("state", "open"),
        labels=tuple(label["name"] for label in item.get("labels", ())),
        comments=tuple(
            Comment(author=(c.get("user") or {}).get("login", ""), created_at=c["created_at"],
                    body=c["body"])
            for c in comments if (c.get("body") or "").strip()
        ),
    )


def fetch_feature_requests(repo, label_filters, token=None, *, client=None, **client_kw):
    """Every issue (open or closed) of ``repo`` carrying one of ``label_filters``.

    Pull requests are dropped, comments are fetched per issue, and the result is
    ordered by issue number.
    """
    label_filters = list(label_filters or ())
    if not label_filters:
        raise UsageError("at least one label filter is required")
    if repo.count("/") != 1:
        raise UsageError(f"repository must be owner/name, got {repo!r}")
    own = client is None
    client = client or GitHubClient(token, **client_kw)
    try:
        found = {}
        for label in label_filters:
            for item in client.issues(repo, label):
                if "pull_request" in item:
                    continue
                names = {lab["name"].casefold() for lab in item.get("labels", ())}
                # the API filters already; re-check so the result only depends on issue data
                if not names & {f.casefold() for f in label_filters}:
                    continue
                found[item["number"]] = item
        numbers = sorted(found)
        log.info("%s: %d labeled issues", repo, len(numbers))
        with ThreadPoolExecutor(max_workers=max(1, client.max_in_flight)) as pool:
            all_comments = list(pool.map(lambda n: client.comments(repo, n), numbers))
        return [_to_request(repo, found[n], c) for n, c in zip(numbers, all_comments)]
    finally:
        if own:
            client.close()


def fetch_issue(repo, number, token=None, *, client=None, **client_kw) -> FeatureRequest:
    own = client is None
    client = client or GitHubClient(token, **client_kw)
    try:
        item = client.issue(repo, number)
        return _to_request(repo, item, client.comments(repo, number))
    finally:
        if own:
            client.close()
