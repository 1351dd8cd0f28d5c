"""Disposable, video-bound access tokens in JWT compact form (HS256).

A customer's web server issues a token per viewer, binding it to the video
ids on the page, an issue time, a TTL and a usage limit. The tracker checks
all of these and keeps a usage ledger keyed by the token's fingerprint.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import hmac
import json
from dataclasses import dataclass, field

HEADER = {"alg": "HS256", "typ": "JWT"}
CLAIM_ORDER = ("customer_id", "pdn_peer_id", "video_ids", "timestamp", "ttl", "usage_limit")

BAD_SIGNATURE = "BadSignature"
EXPIRED = "Expired"
VIDEO_MISMATCH = "VideoMismatch"
USAGE_EXCEEDED = "UsageExceeded"
UNKNOWN_CUSTOMER = "UnknownCustomer"
MALFORMED = "Malformed"


class ParseError(ValueError):
    pass


class AuthError(Exception):
    """Registration refused by the tracker."""


class TokenInvalid(AuthError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


def _b64e(raw: bytes) -> bytes:
    return base64.urlsafe_b64encode(raw).rstrip(b"=")


def _b64d(part: bytes) -> bytes:
    try:
        raw = base64.b64decode(part + b"=" * (-len(part) % 4), altchars=b"-_", validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ParseError(f"bad base64url segment: {exc}") from None
    # reject non-canonical encodings (stray trailing bits, padding)
    if _b64e(raw) != part:
        raise ParseError("non-canonical base64url segment")
    return raw


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode()


@dataclass(frozen=True)
class AccessToken:
    customer_id: str
    pdn_peer_id: str
    video_ids: tuple[str, ...]
    timestamp: int
    ttl: int
    usage_limit: int = 1
    extra: tuple[tuple[str, object], ...] = field(default=(), compare=True)

    def __post_init__(self):
        object.__setattr__(self, "video_ids", tuple(self.video_ids))
        if not self.video_ids:
            raise ValueError("video_ids must be non-empty")
        if self.ttl <= 0:
            raise ValueError("ttl must be positive")
        if self.usage_limit < 1:
            raise ValueError("usage_limit must be >= 1")

    def claims(self) -> dict:
        out = {
            "customer_id": self.customer_id,
            "pdn_peer_id": self.pdn_peer_id,
            "video_ids": list(self.video_ids),
            "timestamp": self.timestamp,
            "ttl": self.ttl,
            "usage_limit": self.usage_limit,
        }
        out.update(self.extra)
        return out

    @classmethod
    def from_claims(cls, claims: dict) -> "AccessToken":
        try:
            known = {k: claims[k] for k in CLAIM_ORDER}
        except KeyError as exc:
            raise ParseError(f"missing claim {exc.args[0]!r}") from None
        if not isinstance(known["video_ids"], list) or not all(isinstance(v, str) for v in known["video_ids"]):
            raise ParseError("video_ids must be a list of strings")
        for k in ("timestamp", "ttl", "usage_limit"):
            if type(known[k]) is not int:
                raise ParseError(f"{k} must be an integer")
        extra = tuple((k, v) for k, v in claims.items() if k not in CLAIM_ORDER)
        try:
            return cls(str(known["customer_id"]), str(known["pdn_peer_id"]), tuple(known["video_ids"]),
                       known["timestamp"], known["ttl"], known["usage_limit"], extra)
        except ValueError as exc:
            raise ParseError(str(exc)) from None


@dataclass(frozen=True)
class SignedToken:
    """Raw header/payload JSON plus the MAC, exactly as carried on the wire."""

    header: bytes
    payload: bytes
    signature: bytes

    @property
    def signing_input(self) -> bytes:
        return _b64e(self.header) + b"." + _b64e(self.payload)

    @property
    def token(self) -> AccessToken:
        try:
            claims = json.loads(self.payload)
        except (ValueError, UnicodeDecodeError) as exc:
            raise ParseError(f"payload is not JSON: {exc}") from None
        if not isinstance(claims, dict):
            raise ParseError("payload must be a JSON object")
        return AccessToken.from_claims(claims)

    def fingerprint(self) -> str:
        return hashlib.sha256(encode(self)).hexdigest()


def encode(signed: SignedToken) -> bytes:
    return signed.signing_input + b"." + _b64e(signed.signature)


def decode(compact: bytes | str) -> SignedToken:
    """Split a compact token into its parts. Does not verify anything."""
    if isinstance(compact, str):
        try:
            compact = compact.encode("ascii")
        except UnicodeEncodeError:
            raise ParseError("token must be ASCII") from None
    parts = compact.split(b".")
    if len(parts) != 3 or not all(parts):
        raise ParseError("expected three non-empty dot-separated parts")
    header, payload, signature = (_b64d(p) for p in parts)
    try:
        h = json.loads(header)
    except (ValueError, UnicodeDecodeError):
        raise ParseError("header is not JSON") from None
    if not isinstance(h, dict) or "alg" not in h:
        raise ParseError("header must be an object with 'alg'")
    return SignedToken(header, payload, signature)


def _mac(secret: bytes, signing_input: bytes) -> bytes:
    return hmac.new(secret, signing_input, hashlib.sha256).digest()


def issue(secret: bytes, customer_id: str, pdn_peer_id: str, video_ids, ttl: int,
          usage_limit: int, now: int, extra: dict | None = None) -> SignedToken:
    """Sign a token for one viewer. ``now`` is Unix seconds."""
    video_ids = tuple(video_ids)
    if not video_ids:
        raise ValueError("video_ids must be non-empty")
    tok = AccessToken(customer_id, str(pdn_peer_id), video_ids, int(now), ttl, usage_limit,
                      tuple((extra or {}).items()))
    return sign(secret, tok)


def sign(secret: bytes, tok: AccessToken, header: dict | None = None) -> SignedToken:
    h = _canonical_json(header or HEADER)
    p = _canonical_json(tok.claims())
    unsigned = SignedToken(h, p, b"")
    return SignedToken(h, p, _mac(secret, unsigned.signing_input))


class UsageLedger:
    """Use counts per token fingerprint. Check-and-increment is a single step."""

    def __init__(self):
        self.counts: dict[str, int] = {}

    def count(self, fingerprint: str) -> int:
        return self.counts.get(fingerprint, 0)

    def consume(self, fingerprint: str, limit: int) -> bool:
        used = self.counts.get(fingerprint, 0)
        if used >= limit:
            return False
        self.counts[fingerprint] = used + 1
        return True


@dataclass(frozen=True)
class Accepted:
    customer_id: str
    pdn_peer_id: str


def verify(signed: SignedToken | bytes | str, now: int, requested_video_id: str,
           ledger: UsageLedger, secrets_by_customer: dict[str, bytes],
           skew: int = 0) -> Accepted:
    """Accept a token or raise :class:`TokenInvalid` with the first failing reason.

    Order: parse, customer lookup, signature, expiry, video binding, usage.
    The usage count only moves on acceptance.
    """
    if not isinstance(signed, SignedToken):
        try:
            signed = decode(signed)
        except ParseError as exc:
            raise TokenInvalid(MALFORMED, str(exc)) from None
    try:
        claims = json.loads(signed.payload)
        customer_id = str(claims["customer_id"])
    except (ValueError, UnicodeDecodeError, KeyError, TypeError):
        raise TokenInvalid(MALFORMED, "unreadable customer_id") from None
    secret = secrets_by_customer.get(customer_id)
    if secret is None:
        raise TokenInvalid(UNKNOWN_CUSTOMER, customer_id)
    try:
        alg = json.loads(signed.header).get("alg")
    except (ValueError, UnicodeDecodeError, AttributeError):
        alg = None
    expected = _mac(secret, signed.signing_input)
    if alg != "HS256" or not hmac.compare_digest(expected, signed.signature):
        raise TokenInvalid(BAD_SIGNATURE)
    try:
        tok = signed.token
    except ParseError as exc:
        raise TokenInvalid(MALFORMED, str(exc)) from None
    if not now < tok.timestamp + tok.ttl + skew:
        raise TokenInvalid(EXPIRED, f"now={now} expiry={tok.timestamp + tok.ttl}")
    if requested_video_id not in tok.video_ids:
        raise TokenInvalid(VIDEO_MISMATCH, requested_video_id)
    if not ledger.consume(signed.fingerprint(), tok.usage_limit):
        raise TokenInvalid(USAGE_EXCEEDED)
    return Accepted(tok.customer_id, tok.pdn_peer_id)


# Reference claim set; signed with HS256 it encodes to 283 bytes.
SAMPLE_TOKEN = AccessToken(
    customer_id="xx.yy",
    pdn_peer_id="1",
    video_ids=("https://xx.yy/zz.m3u8", "https://xx.yy/hh.m3u8"),
    timestamp=1619814238,
    ttl=60,
    usage_limit=1,
)
