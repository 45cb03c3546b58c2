"""Adaptive binary range coder.

A carry-propagating 32-bit range coder (LZMA-style low/cache handling) with
15-bit context probabilities. Each context adapts with a rate that starts
fast (1/4) and settles at 1/64 after a few dozen bins, so short segments
learn quickly while long stationary runs stay close to their entropy.

Stream layout: the coder bytes with the always-zero leading cache byte and
any trailing zero bytes removed, followed by a fixed 2-byte terminator. The
decoder reads zeros past the end of the coded bytes, which is what the
removed tail contained.
"""

from __future__ import annotations

from ..errors import CorruptStream

PROB_BITS = 15
PROB_ONE = 1 << PROB_BITS
PROB_INIT = PROB_ONE // 2
TOP = 1 << 24
MASK32 = 0xFFFFFFFF
TERMINATOR = b"\xa5\x5a"
# adaptation shift by number of bins already seen in the context
_SHIFTS = (2, 2, 3, 3, 3, 4, 4, 4, 4, 4, 4, 4, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5)
_SETTLED = len(_SHIFTS)
_FINAL_SHIFT = 6
# slack past the coded bytes the decoder may legitimately consume
_READ_SLACK = 5


class Contexts:
    """A bank of adaptive binary probabilities (probability of a 0 bin)."""

    __slots__ = ("p", "n")

    def __init__(self, count):
        self.p = [PROB_INIT] * count
        self.n = [0] * count

    def __len__(self):
        return len(self.p)

    def update(self, ctx, bit):
        n = self.n[ctx]
        if n < _SETTLED:
            shift = _SHIFTS[n]
            self.n[ctx] = n + 1
        else:
            shift = _FINAL_SHIFT
        p = self.p[ctx]
        if bit:
            p -= p >> shift
        else:
            p += (PROB_ONE - p) >> shift
        # keep both symbols codable
        if p < 31:
            p = 31
        elif p > PROB_ONE - 31:
            p = PROB_ONE - 31
        self.p[ctx] = p


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()
        self.bins = 0

    def _shift_low(self):
        low = self.low
        if (low & MASK32) < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = self.cache
            out = self.out
            while True:
                out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (low << 8) & MASK32

    def encode(self, ctxs, ctx, bit):
        p = ctxs.p[ctx]
        bound = (self.range >> PROB_BITS) * p
        if bit:
            self.low += bound
            self.range -= bound
        else:
            self.range = bound
        ctxs.update(ctx, bit)
        self.bins += 1
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self._shift_low()

    def encode_bypass(self, bit):
        self.range >>= 1
        if bit:
            self.low += self.range
        self.bins += 1
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self._shift_low()

    def encode_bits(self, value, nbits):
        for k in range(nbits - 1, -1, -1):
            self.encode_bypass((value >> k) & 1)

    def finish(self):
        # pick the value in [low, low + range) with the most trailing zeros
        lo, hi = self.low, self.low + self.range
        for k in range(32, -1, -1):
            v = ((lo + (1 << k) - 1) >> k) << k
            if v < hi:
                self.low = v
                break
        for _ in range(5):
            self._shift_low()
        body = bytes(self.out[1:]).rstrip(b"\x00")
        return body + TERMINATOR


class RangeDecoder:
    def __init__(self, data):
        data = bytes(data)
        if len(data) < len(TERMINATOR) or data[-len(TERMINATOR):] != TERMINATOR:
            raise CorruptStream("entropy payload missing its terminator")
        self.data = data[: -len(TERMINATOR)]
        self.pos = 0
        self.range = MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self):
        pos = self.pos
        self.pos = pos + 1
        if pos < len(self.data):
            return self.data[pos]
        if pos >= len(self.data) + _READ_SLACK:
            raise CorruptStream("entropy decoder ran past the end of the payload")
        return 0

    def decode(self, ctxs, ctx):
        p = ctxs.p[ctx]
        bound = (self.range >> PROB_BITS) * p
        if self.code < bound:
            self.range = bound
            bit = 0
        else:
            self.code -= bound
            self.range -= bound
            bit = 1
        ctxs.update(ctx, bit)
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self.code = ((self.code << 8) | self._next_byte()) & MASK32
        return bit

    def decode_bypass(self):
        self.range >>= 1
        if self.code >= self.range:
            self.code -= self.range
            bit = 1
        else:
            bit = 0
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self.code = ((self.code << 8) | self._next_byte()) & MASK32
        return bit

    def decode_bits(self, nbits):
        v = 0
        for _ in range(nbits):
            v = (v << 1) | self.decode_bypass()
        return v

    def check_consumed(self):
        """Raise if the payload holds more bytes than the decode needed."""
        # the decoder keeps up to 4 bytes buffered in ``code``
        if len(self.data) > self.pos:
            raise CorruptStream(
                f"{len(self.data) - self.pos} unread bytes at the end of the payload"
            )


def entropy_encode(bits, contexts=None, num_contexts=1):
    """Code a bin sequence; ``contexts[i]`` selects the model for ``bits[i]``.

    ``contexts=None`` codes every bin with context 0. A context id of -1
    codes the bin in bypass mode.
    """
    enc = RangeEncoder()
    if contexts is None:
        ctxs = Contexts(1)
        for b in bits:
            enc.encode(ctxs, 0, int(b))
    else:
        ctxs = Contexts(max(num_contexts, max(contexts, default=0) + 1))
        for b, c in zip(bits, contexts):
            if c < 0:
                enc.encode_bypass(int(b))
            else:
                enc.encode(ctxs, c, int(b))
    return enc.finish()


def entropy_decode(data, count=None, contexts=None, num_contexts=1):
    if contexts is None:
        if count is None:
            raise ValueError("count is required when contexts are not given")
        contexts = [0] * count
    dec = RangeDecoder(data)
    ctxs = Contexts(max(num_contexts, max(contexts, default=0) + 1))
    out = [dec.decode_bypass() if c < 0 else dec.decode(ctxs, c) for c in contexts]
    dec.check_consumed()
    return out
