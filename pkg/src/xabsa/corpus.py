"""Bilingual corpus machinery.

Covers four concerns: parsing marker-annotated raw text, building
code-switched sentence variants with aspect-pair alignments, generating a
synthetic aligned bilingual corpus for desk-scale experiments, and lossless
JSONL persistence of whole corpus bundles.

Marker syntax: every aspect is wrapped as ``{idx:POL token ...}`` where idx
pairs the aspect across the two languages of a parallel sentence and POL is
one of POS/NEU/NEG.  Example::

    The {1:POS service} was great

Variant codes: S = source sentence, T = its target-language translation,
S_T = source sentence with target-language aspect terms swapped in, T_S =
the symmetric swap.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .labelspace import (
    AspectSpan,
    Polarity,
    decode_strict,
    encode,
    sort_spans,
    tag_id,
    tag_string,
)

VARIANTS = ("S", "T", "S_T", "T_S")
SOURCE_SIDE = ("S", "S_T")
TARGET_SIDE = ("T", "T_S")

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1


class MarkerError(ValueError):
    """Malformed aspect markers in a raw line."""

    def __init__(self, offset: int, reason: str):
        super().__init__(f"marker error at offset {offset}: {reason}")
        self.offset = offset
        self.reason = reason


class RecordError(ValueError):
    """Malformed record in a dataset file."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class AlignmentError(ValueError):
    """Aspect markers of a parallel pair do not line up."""


@dataclass(frozen=True)
class IndexedSpan:
    """Aspect span plus the marker index that pairs it across languages."""

    start: int
    end: int
    polarity: Polarity
    idx: int

    def as_span(self) -> AspectSpan:
        return AspectSpan(self.start, self.end, self.polarity)


@dataclass
class MarkedSentence:
    """Working form between raw parsing and tagged sentences."""

    tokens: list[str]
    spans: list[IndexedSpan]
    lang: str


def parse_raw(line: str) -> tuple[list[str], list[IndexedSpan]]:
    """Tokenize a marker-annotated line.

    Whitespace tokenization outside markers; each ``{idx:POL ...}`` marker
    contributes its content tokens plus an IndexedSpan.
    """
    tokens: list[str] = []
    spans: list[IndexedSpan] = []
    seen: set[int] = set()
    i, n = 0, len(line)
    while i < n:
        c = line[i]
        if c == "}":
            raise MarkerError(i, "'}' without a matching '{'")
        if c == "{":
            close = line.find("}", i + 1)
            if close == -1:
                raise MarkerError(i, "unbalanced marker: '{' is never closed")
            inner = line[i + 1 : close]
            if "{" in inner:
                raise MarkerError(i + 1 + inner.index("{"), "markers cannot nest or overlap")
            head, _, body = inner.partition(" ")
            idx_str, colon, pol_str = head.partition(":")
            if not colon or not idx_str.isdigit() or pol_str not in Polarity.__members__:
                raise MarkerError(i, f"marker head must be 'idx:POL', got {head!r}")
            idx = int(idx_str)
            if idx in seen:
                raise MarkerError(i, f"duplicate marker index {idx}")
            seen.add(idx)
            content = body.split()
            if not content:
                raise MarkerError(i, "marker needs at least one aspect token")
            start = len(tokens)
            tokens.extend(content)
            spans.append(IndexedSpan(start, len(tokens) - 1, Polarity[pol_str], idx))
            i = close + 1
        else:
            j = i
            while j < n and line[j] not in "{}":
                j += 1
            tokens.extend(line[i:j].split())
            i = j
    return tokens, spans


def code_switch(host: MarkedSentence, donor: MarkedSentence) -> MarkedSentence:
    """Replace every aspect-token run in `host` by its index-matched run from
    `donor`, keeping context tokens and polarities untouched.

    Switching S with donor T yields S_T; switching the result with donor S
    restores the original (involution on the aspect slots).
    """
    donor_by_idx = {s.idx: s for s in donor.spans}
    new_tokens: list[str] = []
    new_spans: list[IndexedSpan] = []
    cursor = 0
    for sp in sorted(host.spans, key=lambda s: s.start):
        counterpart = donor_by_idx.get(sp.idx)
        if counterpart is None:
            raise AlignmentError(f"no counterpart for marker index {sp.idx}")
        if counterpart.polarity != sp.polarity:
            raise AlignmentError(
                f"marker index {sp.idx} has polarity {sp.polarity.value} vs "
                f"{counterpart.polarity.value}"
            )
        new_tokens.extend(host.tokens[cursor : sp.start])
        start = len(new_tokens)
        new_tokens.extend(donor.tokens[counterpart.start : counterpart.end + 1])
        new_spans.append(IndexedSpan(start, len(new_tokens) - 1, sp.polarity, sp.idx))
        cursor = sp.end + 1
    new_tokens.extend(host.tokens[cursor:])
    return MarkedSentence(new_tokens, new_spans, host.lang)


@dataclass
class TaggedSentence:
    """A token sequence with one tag per token, ready for training."""

    sid: str
    lang: str
    variant: str
    tokens: tuple[str, ...]
    tags: tuple[int, ...]
    token_ids: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"{self.sid}: {len(self.tokens)} tokens vs {len(self.tags)} tags"
            )

    def spans(self) -> list[AspectSpan]:
        return sort_spans(decode_strict(self.tags))


@dataclass
class UnlabeledSentence:
    """Target-language text available for soft labeling; carries no tags."""

    sid: str
    lang: str
    tokens: tuple[str, ...]
    token_ids: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass
class ParallelExample:
    """The four aligned variants of one sentence plus span-pair alignments.

    Alignments are (variant_a, span_index_a, variant_b, span_index_b) with
    span indices into the start-ordered span list of each variant.
    """

    variants: dict[str, TaggedSentence]
    alignments: list[tuple[str, int, str, int]]

    @property
    def base_id(self) -> str:
        sid = self.variants["S"].sid
        return sid.rsplit(":", 1)[0]

    @property
    def target_lang(self) -> str:
        return self.variants["T"].lang

    def validate(self) -> None:
        if set(self.variants) != set(VARIANTS):
            raise ValueError(f"{self.base_id}: expected variants {VARIANTS}")
        spans = {v: self.variants[v].spans() for v in VARIANTS}
        covered = {v: set() for v in VARIANTS}
        for va, ia, vb, ib in self.alignments:
            a, b = spans[va][ia], spans[vb][ib]
            if a.polarity != b.polarity:
                raise ValueError(
                    f"{self.base_id}: alignment ({va},{ia})-({vb},{ib}) "
                    f"joins polarities {a.polarity.value} and {b.polarity.value}"
                )
            covered[va].add(ia)
            covered[vb].add(ib)
        for v in VARIANTS:
            missing = set(range(len(spans[v]))) - covered[v]
            if missing:
                raise ValueError(
                    f"{self.base_id}: spans {sorted(missing)} of {v} are unaligned"
                )


# Variant pairs that carry consistency alignments, in emission order.
ALIGNED_PAIRS = (("S", "T"), ("S", "S_T"), ("T", "T_S"))


def build_parallel_example(base_id: str, source: MarkedSentence,
                           target: MarkedSentence) -> ParallelExample:
    """Assemble S/T plus both code-switched variants and their alignments."""
    src_idx = {s.idx for s in source.spans}
    tgt_idx = {s.idx for s in target.spans}
    if src_idx != tgt_idx:
        raise AlignmentError(
            f"{base_id}: marker index sets differ: {sorted(src_idx)} vs {sorted(tgt_idx)}"
        )
    marked = {
        "S": source,
        "T": target,
        "S_T": code_switch(source, target),
        "T_S": code_switch(target, source),
    }
    variants = {}
    order = {}  # variant -> marker idx in start order
    for v, m in marked.items():
        spans_sorted = sorted(m.spans, key=lambda s: s.start)
        tags = encode([s.as_span() for s in spans_sorted], len(m.tokens))
        variants[v] = TaggedSentence(
            sid=f"{base_id}:{v}",
            lang=m.lang,
            variant=v,
            tokens=tuple(m.tokens),
            tags=tuple(tags),
        )
        order[v] = [s.idx for s in spans_sorted]
    alignments = []
    for va, vb in ALIGNED_PAIRS:
        pos_b = {idx: i for i, idx in enumerate(order[vb])}
        for ia, idx in enumerate(order[va]):
            alignments.append((va, ia, vb, pos_b[idx]))
    return ParallelExample(variants, alignments)


class Vocabulary:
    """Shared surface-string <-> id map; id 0 is padding, id 1 unknown."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            tokens = [PAD_TOKEN, UNK_TOKEN] + tokens
        self.tokens = tokens
        self._ids = {t: i for i, t in enumerate(tokens)}
        if len(self._ids) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")

    @classmethod
    def build(cls, sentences) -> "Vocabulary":
        seen: dict[str, None] = {}
        for sent in sentences:
            for tok in sent.tokens:
                seen.setdefault(tok, None)
        return cls(list(seen))

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self._ids.get(token, 1)

    def encode_tokens(self, tokens) -> np.ndarray:
        return np.array([self.id(t) for t in tokens], dtype=np.intp)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __len__(self):
        return len(self.tokens)


@dataclass
class CorpusBundle:
    """Train/dev/test splits of parallel examples plus the shared vocabulary."""

    source_lang: str
    target_langs: tuple[str, ...]
    splits: dict[str, list[ParallelExample]]
    vocab: Vocabulary = None
    token_maps: dict = field(default=None, compare=False, repr=False)

    def finalize(self) -> "CorpusBundle":
        """Build the vocabulary from the train split and attach token ids.

        Dev/test tokens outside the training vocabulary map to the unknown
        id, as they would with any vocabulary derived from training data.
        """
        self.vocab = Vocabulary.build(self._iter_sentences("train"))
        for sent in self._iter_sentences():
            sent.token_ids = self.vocab.encode_tokens(sent.tokens)
        return self

    def _iter_sentences(self, *splits):
        for split in splits or ("train", "dev", "test"):
            for ex in self.splits.get(split, []):
                for v in VARIANTS:
                    yield ex.variants[v]

    def examples(self, split: str, target_lang: str | None = None):
        out = self.splits.get(split, [])
        if target_lang is not None:
            out = [ex for ex in out if ex.target_lang == target_lang]
        return out

    def sentences(self, split: str, variants=VARIANTS,
                  target_lang: str | None = None) -> list[TaggedSentence]:
        return [
            ex.variants[v]
            for ex in self.examples(split, target_lang)
            for v in variants
        ]

    def d_u(self, target_lang: str | None = None) -> list[TaggedSentence]:
        """The supervised training pool: train-split S, T, S_T and T_S."""
        return self.sentences("train", VARIANTS, target_lang)

    def consistency_pairs(self, pair_mask, target_lang: str | None = None):
        """Aligned span pairs of the train split, filtered to masked variant pairs.

        Yields (sentence_a, span_a, sentence_b, span_b) tuples.
        """
        allowed = {tuple(p.split(":")) for p in pair_mask}
        pairs = []
        for ex in self.examples("train", target_lang):
            spans = {v: ex.variants[v].spans() for v in VARIANTS}
            for va, ia, vb, ib in ex.alignments:
                if (va, vb) in allowed or (vb, va) in allowed:
                    pairs.append(
                        (ex.variants[va], spans[va][ia], ex.variants[vb], spans[vb][ib])
                    )
        return pairs

    def unlabeled_target(self, target_lang: str) -> list[UnlabeledSentence]:
        """Target-language test texts with labels stripped (the soft-label pool)."""
        return [
            UnlabeledSentence(s.sid, s.lang, s.tokens, s.token_ids)
            for s in self.sentences("test", ("T",), target_lang)
        ]

    def stats(self) -> dict:
        """Sentence and aspect counts per split and language."""
        out: dict = {}
        for split in ("train", "dev", "test"):
            langs: dict = {}
            for lang, variant in [(self.source_lang, "S")] + [
                (t, "T") for t in self.target_langs
            ]:
                sents = [
                    ex.variants[variant]
                    for ex in self.examples(split)
                    if variant == "S" or ex.target_lang == lang
                ]
                langs[lang] = {
                    "sentences": len(sents),
                    "aspects": sum(len(s.spans()) for s in sents),
                }
            out[split] = langs
        return out


def format_stats(bundle: CorpusBundle) -> str:
    """Render per-split sentence/aspect counts as a small text grid."""
    stats = bundle.stats()
    langs = [bundle.source_lang, *bundle.target_langs]
    lines = ["split    " + "".join(f"{lang:>10}" for lang in langs)]
    for split, row in stats.items():
        ns = "".join(f"{row[lang]['sentences']:>10}" for lang in langs)
        na = "".join(f"{row[lang]['aspects']:>10}" for lang in langs)
        lines.append(f"{split:<6} #S{ns}")
        lines.append(f"{'':<6} #A{na}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# JSONL persistence
# ---------------------------------------------------------------------------

_REQUIRED_FIELDS = ("id", "lang", "variant", "tokens", "tags", "align")


def save_bundle(bundle: CorpusBundle, path: str) -> None:
    """Write train/dev/test JSONL files (one record per sentence variant)."""
    os.makedirs(path, exist_ok=True)
    for split in ("train", "dev", "test"):
        with open(os.path.join(path, f"{split}.jsonl"), "w", encoding="utf-8") as f:
            for ex in bundle.splits.get(split, []):
                align = [list(a) for a in ex.alignments]
                for v in VARIANTS:
                    s = ex.variants[v]
                    record = {
                        "id": s.sid,
                        "lang": s.lang,
                        "variant": s.variant,
                        "tokens": list(s.tokens),
                        "tags": [tag_string(t) for t in s.tags],
                        "align": align,
                    }
                    f.write(json.dumps(record, ensure_ascii=False) + "\n")


def _parse_record(line: str, line_number: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(line_number, f"invalid JSON ({exc.msg})") from None
    if not isinstance(record, dict):
        raise RecordError(line_number, "record must be a JSON object")
    for fieldname in _REQUIRED_FIELDS:
        if fieldname not in record:
            raise RecordError(line_number, f"missing {fieldname!r} field")
    if record["variant"] not in VARIANTS:
        raise RecordError(line_number, f"unknown variant {record['variant']!r}")
    return record


def _load_split(path: str) -> list[ParallelExample]:
    groups: dict[str, dict] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            record = _parse_record(line, line_number)
            try:
                tags = tuple(tag_id(t) for t in record["tags"])
                sent = TaggedSentence(
                    sid=record["id"],
                    lang=record["lang"],
                    variant=record["variant"],
                    tokens=tuple(record["tokens"]),
                    tags=tags,
                )
                sent.spans()  # gold data must decode strictly
            except ValueError as exc:
                raise RecordError(line_number, str(exc)) from None
            base = record["id"].rsplit(":", 1)[0]
            group = groups.get(base)
            if group is None:
                group = groups[base] = {"variants": {}, "align": record["align"],
                                        "line": line_number}
                order.append(base)
            if record["align"] != group["align"]:
                raise RecordError(
                    line_number, f"alignment differs within group {base!r}"
                )
            if record["variant"] in group["variants"]:
                raise RecordError(
                    line_number, f"duplicate variant {record['variant']} in group {base!r}"
                )
            group["variants"][record["variant"]] = sent
    examples = []
    for base in order:
        group = groups[base]
        if set(group["variants"]) != set(VARIANTS):
            missing = sorted(set(VARIANTS) - set(group["variants"]))
            raise RecordError(
                group["line"], f"group {base!r} is missing variants {missing}"
            )
        ex = ParallelExample(
            variants=group["variants"],
            alignments=[tuple(a) for a in group["align"]],
        )
        try:
            ex.validate()
        except ValueError as exc:
            raise RecordError(group["line"], str(exc)) from None
        examples.append(ex)
    return examples


def load_bundle(path: str) -> CorpusBundle:
    """Load a bundle saved by :func:`save_bundle`; exact round trip."""
    splits = {}
    for split in ("train", "dev", "test"):
        split_path = os.path.join(path, f"{split}.jsonl")
        splits[split] = _load_split(split_path) if os.path.exists(split_path) else []
    all_examples = [ex for exs in splits.values() for ex in exs]
    source_lang = all_examples[0].variants["S"].lang if all_examples else "A"
    target_langs = []
    for ex in all_examples:
        if ex.target_lang not in target_langs:
            target_langs.append(ex.target_lang)
    bundle = CorpusBundle(
        source_lang=source_lang,
        target_langs=tuple(target_langs) or ("B",),
        splits=splits,
    )
    return bundle.finalize()


def load_raw_file(path: str, source_lang: str = "A",
                  target_lang: str = "B") -> list[ParallelExample]:
    """Parse a raw marker file: source/target line pairs, blank-line separated."""
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    groups: list[list[str]] = [[]]
    for ln in lines:
        if ln.strip():
            groups[-1].append(ln)
        elif groups[-1]:
            groups.append([])
    if groups and not groups[-1]:
        groups.pop()
    examples = []
    for i, group in enumerate(groups):
        if len(group) != 2:
            raise ValueError(
                f"group {i} has {len(group)} lines; expected a source/target pair"
            )
        src_tokens, src_spans = parse_raw(group[0])
        tgt_tokens, tgt_spans = parse_raw(group[1])
        examples.append(
            build_parallel_example(
                f"raw-{i:04d}-{source_lang}2{target_lang}",
                MarkedSentence(src_tokens, src_spans, source_lang),
                MarkedSentence(tgt_tokens, tgt_spans, target_lang),
            )
        )
    return examples


def bundle_from_examples(examples, source_lang: str = "A",
                         target_langs=("B",)) -> CorpusBundle:
    """Wrap raw-ingested examples as a train-only bundle."""
    bundle = CorpusBundle(
        source_lang=source_lang,
        target_langs=tuple(target_langs),
        splits={"train": list(examples), "dev": [], "test": []},
    )
    return bundle.finalize()


# ---------------------------------------------------------------------------
# Synthetic bilingual corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic aligned bilingual generator."""

    template_count: int = 14
    aspects_per_polarity: int = 8  # per polarity, separately per split pool
    train_sentences: int = 160
    dev_sentences: int = 48
    test_sentences: int = 72
    target_langs: tuple[str, ...] = ("B",)
    shared_vocab_fraction: float = 0.4  # tokens kept identical across languages
    article_fraction: float = 0.35  # aspects whose translation gains an article
    keep_order_fraction: float = 0.3  # templates whose target keeps source order
    filler_tokens: int = 3  # translationese: per-language function fillers
    max_fillers_per_template: int = 2


# Review-style templates; <a0>/<o0> are linked aspect/opinion slots.
_TEMPLATES = [
    "the <a0> was <o0> .",
    "i thought the <a0> was really <o0> .",
    "the <a0> was <o0> but the <a1> was <o1> .",
    "honestly the <a0> seemed <o0> to us .",
    "we found the <a0> quite <o0> .",
    "my friend said the <a0> was <o0> .",
    "the <a0> turned out <o0> despite the rush .",
    "for the price the <a0> felt <o0> .",
    "the <a0> felt <o0> while the <a1> stayed <o1> .",
    "overall a <o0> <a0> experience .",
    "they praised the <a0> as <o0> .",
    "the <a0> and the staff mood were <o0> .",
    "nothing special happened that evening .",
    "we waited a long time before seating .",
]

_OPINIONS = {
    Polarity.POS: ("great", "lovely", "superb", "friendly", "tasty", "charming"),
    Polarity.NEU: ("okay", "average", "ordinary", "plain", "standard", "passable"),
    Polarity.NEG: ("awful", "bad", "slow", "bland", "rude", "dirty"),
}

_CONSONANTS = "bcdfglmnprstvz"
_VOWELS = "aeiou"


def _pseudo_word(rng: np.random.Generator, used: set[str], syllables: int = 2) -> str:
    while True:
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))]
            + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(syllables)
        )
        if word not in used:
            used.add(word)
            return word


def _parse_template(template: str):
    """Split a template into elements: plain tokens or (kind, slot) tuples."""
    elements = []
    for tok in template.split():
        if tok.startswith("<a") and tok.endswith(">"):
            elements.append(("ASP", int(tok[2:-1])))
        elif tok.startswith("<o") and tok.endswith(">"):
            elements.append(("OPI", int(tok[2:-1])))
        else:
            elements.append(tok)
    return elements


@dataclass
class _SynthLanguage:
    """One synthetic target language: token map, aspect dictionary, word order."""

    name: str
    token_map: dict[str, str]
    aspect_dict: dict[tuple[str, ...], tuple[str, ...]]
    template_orders: dict[int, list[int]]  # template index -> element permutation
    template_fillers: dict[int, list[tuple[int, str]]]  # position -> filler token


def synth_bilingual(cfg: SynthConfig, seed: int) -> CorpusBundle:
    """Generate a deterministic aligned bilingual corpus.

    Language A realizes review templates with pseudo-word aspect terms drawn
    from per-polarity pools; each target language is a bijective token
    mapping of A with a permuted per-template word order and a phrase-level
    aspect dictionary (translations may gain an article token).  Train, dev
    and test draw aspects from three mutually disjoint pools, so scores
    measure context-driven tagging rather than lexicon recall.
    """
    if cfg.aspects_per_polarity < 3:
        raise ValueError("need an aspect lexicon of at least 3 per polarity")
    if not 2 <= cfg.template_count <= len(_TEMPLATES):
        raise ValueError(f"template_count must be in 2..{len(_TEMPLATES)}")
    rng = np.random.default_rng(seed)
    templates = [_parse_template(t) for t in _TEMPLATES[: cfg.template_count]]

    used: set[str] = set()
    for t in templates:
        used.update(e for e in t if isinstance(e, str))
    for words in _OPINIONS.values():
        used.update(words)

    def make_aspect_pool():
        pool = {}
        for pol in Polarity:
            phrases = []
            for _ in range(cfg.aspects_per_polarity):
                length = 1 + int(rng.random() < 0.35)
                phrases.append(tuple(_pseudo_word(rng, used) for _ in range(length)))
            pool[pol] = phrases
        return pool

    train_aspects = make_aspect_pool()
    dev_aspects = make_aspect_pool()
    test_aspects = make_aspect_pool()

    a_vocab = sorted(used)
    languages = []
    for lang in cfg.target_langs:
        token_map = {}
        taken: set[str] = set(a_vocab)
        for tok in a_vocab:
            if tok == "." or rng.random() < cfg.shared_vocab_fraction:
                token_map[tok] = tok
            else:
                token_map[tok] = _pseudo_word(rng, taken)
        article = _pseudo_word(rng, taken)
        aspect_dict = {}
        for pool in (train_aspects, dev_aspects, test_aspects):
            for phrases in pool.values():
                for phrase in phrases:
                    translated = tuple(token_map[t] for t in phrase)
                    if rng.random() < cfg.article_fraction:
                        translated = (article,) + translated
                    aspect_dict[phrase] = translated
        fillers = [_pseudo_word(rng, taken) for _ in range(cfg.filler_tokens)]
        orders = {}
        extra = {}
        for ti, elements in enumerate(templates):
            body = len(elements) - 1  # final period stays terminal
            if rng.random() < cfg.keep_order_fraction:
                orders[ti] = list(range(len(elements)))
            else:
                orders[ti] = list(rng.permutation(body)) + [body]
            # Translationese: a fixed set of function fillers per template,
            # giving the target language its own length and frequency profile.
            n_fill = int(rng.integers(0, cfg.max_fillers_per_template + 1))
            extra[ti] = sorted(
                (int(rng.integers(0, body + 1)), fillers[int(rng.integers(len(fillers)))])
                for _ in range(n_fill)
            )
        languages.append(_SynthLanguage(lang, token_map, aspect_dict, orders, extra))

    polarities = tuple(Polarity)

    def realize(split: str, count: int, aspects):
        examples = []
        for i in range(count):
            ti = int(rng.integers(len(templates)))
            elements = templates[ti]
            slots = {}
            for e in elements:
                if isinstance(e, tuple) and e[0] == "ASP" and e[1] not in slots:
                    pol = polarities[rng.integers(3)]
                    phrase = aspects[pol][rng.integers(len(aspects[pol]))]
                    opinion = _OPINIONS[pol][rng.integers(len(_OPINIONS[pol]))]
                    slots[e[1]] = (pol, phrase, opinion)
            for lang_spec in languages:
                src = _realize_elements(elements, slots, lambda t: t,
                                        lambda p: p, lambda o: o)
                tgt_elements = [elements[j] for j in lang_spec.template_orders[ti]]
                for pos, tok in reversed(lang_spec.template_fillers[ti]):
                    tgt_elements.insert(pos, tok)
                tgt = _realize_elements(
                    tgt_elements, slots,
                    lambda t: lang_spec.token_map.get(t, t),
                    lambda p: lang_spec.aspect_dict[p],
                    lambda o: lang_spec.token_map[o],
                )
                base = f"{split}-{i:04d}-{lang_spec.name}"
                examples.append(
                    build_parallel_example(
                        base,
                        MarkedSentence(*src, lang="A"),
                        MarkedSentence(*tgt, lang=lang_spec.name),
                    )
                )
        return examples

    bundle = CorpusBundle(
        source_lang="A",
        target_langs=cfg.target_langs,
        splits={
            "train": realize("train", cfg.train_sentences, train_aspects),
            "dev": realize("dev", cfg.dev_sentences, dev_aspects),
            "test": realize("test", cfg.test_sentences, test_aspects),
        },
        token_maps={spec.name: spec.token_map for spec in languages},
    )
    return bundle.finalize()


def _realize_elements(elements, slots, map_token, map_phrase, map_opinion):
    tokens: list[str] = []
    spans: list[IndexedSpan] = []
    for e in elements:
        if isinstance(e, str):
            tokens.append(map_token(e))
        elif e[0] == "OPI":
            tokens.append(map_opinion(slots[e[1]][2]))
        else:
            pol, phrase, _ = slots[e[1]]
            phrase = map_phrase(phrase)
            start = len(tokens)
            tokens.extend(phrase)
            spans.append(IndexedSpan(start, len(tokens) - 1, pol, e[1] + 1))
    return tokens, spans
