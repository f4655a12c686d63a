"""
Dataset records, the binary image-feature store, FSVQA keyword selection,
and a seeded synthetic generator with planted keywords.
"""

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ParseError, ValidationError
from .text import tokenize, write_embedding_file

log = logging.getLogger(__name__)

REQUIRED_FIELDS = ("example_id", "image_id", "question", "answer")


@dataclass
class VqaExample:
    example_id: str
    image_id: str
    question: str
    answer: str
    keyword: str | None = None
    question_type: str | None = None
    # set when the gold keyword is not a token of the answer
    flagged: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not self.question.strip() or not self.answer.strip():
            raise ValidationError(f"example {self.example_id}: question and answer must be nonempty")
        if self.question_type is None:
            self.question_type = " ".join(tokenize(self.question)[:2])

    @property
    def answer_tokens(self):
        return tokenize(self.answer)

    @property
    def question_tokens(self):
        return tokenize(self.question)

    @property
    def evaluable(self):
        return self.keyword is not None and not self.flagged

    def to_json(self):
        d = asdict(self)
        d.pop("flagged")
        if d["keyword"] is None:
            d.pop("keyword")
        return d


def _keyword_in_answer(keyword, answer_tokens):
    kw = tokenize(keyword)
    return bool(kw) and any(t in answer_tokens for t in kw)


def load_dataset(path):
    """Read a JSON-lines dataset. Missing required fields raise ``ParseError``
    naming the line; a keyword absent from its answer only flags the example."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno, path=path) from None
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", line=lineno, path=path)
            missing = [k for k in REQUIRED_FIELDS if not isinstance(rec.get(k), str)]
            if missing:
                raise ParseError(f"missing required field(s) {missing}", line=lineno, path=path)
            try:
                ex = VqaExample(
                    example_id=rec["example_id"], image_id=rec["image_id"],
                    question=rec["question"], answer=rec["answer"],
                    keyword=rec.get("keyword"), question_type=rec.get("question_type"),
                )
            except ValidationError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            if ex.keyword is not None and not _keyword_in_answer(ex.keyword, ex.answer_tokens):
                log.warning("%s:%d: keyword %r not in answer; example excluded from evaluation",
                            path, lineno, ex.keyword)
                ex.flagged = True
            examples.append(ex)
    return examples


def write_dataset(path, examples):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), sort_keys=True) + "\n")


# -- image features ----------------------------------------------------------

class ImageFeatureStore:
    """Read-only map image_id -> float64 vector backed by ``<stem>.bin`` + ``<stem>.idx``.

    The index holds ``image_id<TAB>byte_offset`` lines; the dimension is
    recovered from the payload size.
    """

    def __init__(self, index_path):
        index_path = Path(index_path)
        self.index_path = index_path
        self.bin_path = index_path.with_suffix(".bin")
        self.offsets = {}
        with open(index_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2:
                    raise ParseError("expected 'image_id<TAB>byte_offset'", line=lineno, path=index_path)
                try:
                    self.offsets[parts[0]] = int(parts[1])
                except ValueError:
                    raise ParseError("byte offset is not an integer", line=lineno, path=index_path) from None
        self._data = np.memmap(self.bin_path, dtype="<f8", mode="r") if self.offsets else np.zeros(0)
        n = len(self.offsets)
        if n and self._data.size % n:
            raise FormatError(f"{self.bin_path}: payload size not divisible by {n} records")
        self.dim = self._data.size // n if n else 0

    def __len__(self):
        return len(self.offsets)

    def __contains__(self, image_id):
        return image_id in self.offsets

    def get(self, image_id):
        try:
            off = self.offsets[image_id]
        except KeyError:
            raise ValidationError(f"no image feature for image_id {image_id!r}") from None
        start = off // 8
        return np.array(self._data[start:start + self.dim], dtype=np.float64)

    __getitem__ = get


def write_feature_store(index_path, features):
    """Write ``{image_id: vector}`` as little-endian float64 payload plus text index."""
    index_path = Path(index_path)
    dims = {len(v) for v in features.values()}
    if len(dims) > 1:
        raise ValidationError("all image features must share one dimension")
    offset = 0
    with open(index_path.with_suffix(".bin"), "wb") as bf, open(index_path, "w", encoding="utf-8") as ix:
        for image_id, vec in features.items():
            vec = np.asarray(vec, dtype="<f8")
            if not np.any(vec):
                raise ValidationError(f"image feature {image_id!r} is the zero vector")
            bf.write(vec.tobytes())
            ix.write(f"{image_id}\t{offset}\n")
            offset += vec.nbytes
    return index_path


# -- FSVQA keyword mapping -----------------------------------------------------

def select_fsvqa_keyword(annotations):
    """Most frequent annotation, or ``None`` when the top frequency is shared."""
    if not annotations:
        raise ValidationError("annotation list is empty")
    ranked = Counter(annotations).most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return None
    return ranked[0][0]


# -- synthetic data ------------------------------------------------------------

KEYWORD_NOUNS = (
    "apple", "banana", "candle", "teapot", "umbrella", "guitar", "laptop", "bicycle",
    "pillow", "vase", "clock", "kettle", "lantern", "basket", "helmet", "bottle",
    "camera", "ladder", "mirror", "bucket", "wallet", "hammer", "violin", "anchor",
    "trumpet", "saddle", "compass", "blanket", "pumpkin", "feather", "statue", "scooter",
    "pencil", "carpet", "cookie", "kite", "rocket", "sponge", "tablet", "whistle",
)
MODIFIERS = ("white", "black", "large", "small", "old", "bright", "tall", "round")

# (question pattern, answer pattern); {k} keyword, {x} context, {d1}/{d2} its descriptors, {m} modifier
TEMPLATES = (
    ("what is in front of the {m} {x}?", "the {d1} {d2} {k} is in front of the {x}."),
    ("what is on the {m} {x}?", "the {k} is on the {d1} {d2} {x}."),
    ("which object is next to the {m} {x}?", "the object next to the {d1} {x} is a {d2} {k}."),
    ("what do you see near the {m} {x}?", "i see a {k} near the {d1} {x} with {d2}."),
    ("what is the thing behind the {m} {x}?", "the thing behind the {d1} {x} is the {d2} {k}."),
    ("what is under the {m} {x}?", "there is a {d1} {k} under the {d2} {x}."),
    ("what is lying beside the {m} {x}?", "a {k} is lying beside the {d1} {d2} {x}."),
    ("what can be found by the {m} {x}?", "a {d1} {k} can be found by the {d2} {x}."),
)

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
_VOWELS = ("a", "e", "i", "o", "u")


@dataclass
class SyntheticSpec:
    n_train: int = 2000
    n_val: int = 500
    n_keyword_classes: int = 30
    n_templates: int = 8
    noise_std: float = 0.1
    seed: int = 7
    n_contexts: int = 40
    d_img: int = 16
    d_e: int = 32
    n_modifiers: int = 8

    def validate(self):
        for name in ("n_train", "n_keyword_classes", "n_templates", "n_contexts", "d_img", "d_e", "n_modifiers"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"SyntheticSpec.{name} must be positive")
        if self.n_val < 0:
            raise ValidationError("SyntheticSpec.n_val must be non-negative")
        if self.noise_std < 0:
            raise ValidationError("SyntheticSpec.noise_std must be non-negative")
        if self.n_templates > len(TEMPLATES):
            raise ValidationError(f"at most {len(TEMPLATES)} templates are available")
        if self.n_keyword_classes > len(KEYWORD_NOUNS):
            raise ValidationError(f"at most {len(KEYWORD_NOUNS)} keyword classes are available")
        if self.n_modifiers > len(MODIFIERS):
            raise ValidationError(f"at most {len(MODIFIERS)} modifiers are available")


@dataclass
class SyntheticData:
    train: list
    val: list
    features: dict
    embeddings: dict
    spec: SyntheticSpec


def _pseudo_words(rng, count, taken):
    words = []
    while len(words) < count:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(3))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def make_synthetic(spec):
    """Build a planted-keyword dataset in memory.

    Each keyword class owns an image prototype; the image feature of an example
    is its prototype plus Gaussian noise. Every context word ``x`` mentioned in
    the question owns two descriptor words that appear in the answer but never
    in the question, so "not in the question" alone does not identify the
    keyword and the descriptors are rarer than any keyword.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    taken = set(KEYWORD_NOUNS) | set(MODIFIERS)
    for q, a in TEMPLATES:
        taken.update(tokenize(q.format(k="", x="", d1="", d2="", m="")))
        taken.update(tokenize(a.format(k="", x="", d1="", d2="", m="")))
    keywords = list(KEYWORD_NOUNS[:spec.n_keyword_classes])
    contexts = _pseudo_words(rng, spec.n_contexts, taken)
    descriptors = _pseudo_words(rng, 2 * spec.n_contexts, taken)
    desc_of = {x: (descriptors[2 * i], descriptors[2 * i + 1]) for i, x in enumerate(contexts)}
    prototypes = rng.normal(size=(spec.n_keyword_classes, spec.d_img))

    examples = []
    features = {}
    for i in range(spec.n_train + spec.n_val):
        c = int(rng.integers(spec.n_keyword_classes))
        x = contexts[int(rng.integers(spec.n_contexts))]
        m = MODIFIERS[int(rng.integers(spec.n_modifiers))]
        qt, at = TEMPLATES[int(rng.integers(spec.n_templates))]
        d1, d2 = desc_of[x]
        image_id = f"img{i:06d}"
        feat = prototypes[c] + rng.normal(0.0, spec.noise_std, size=spec.d_img) if spec.noise_std > 0 \
            else prototypes[c].copy()
        features[image_id] = feat
        examples.append(VqaExample(
            example_id=f"syn{i:06d}", image_id=image_id,
            question=qt.format(m=m, x=x), answer=at.format(k=keywords[c], x=x, d1=d1, d2=d2),
            keyword=keywords[c],
        ))

    vocab_words = sorted({t for ex in examples for t in ex.answer_tokens + ex.question_tokens})
    embeddings = {w: rng.normal(0.0, 1.0 / np.sqrt(spec.d_e), size=spec.d_e) for w in vocab_words}
    return SyntheticData(train=examples[:spec.n_train], val=examples[spec.n_train:],
                         features=features, embeddings=embeddings, spec=spec)


def generate_synthetic(spec, out_dir):
    """Write ``train.jsonl``, ``val.jsonl``, ``features.bin/.idx`` and ``embeddings.txt``."""
    data = make_synthetic(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": out / "train.jsonl",
        "val": out / "val.jsonl",
        "features": out / "features.idx",
        "embeddings": out / "embeddings.txt",
    }
    write_dataset(paths["train"], data.train)
    write_dataset(paths["val"], data.val)
    write_feature_store(paths["features"], data.features)
    write_embedding_file(paths["embeddings"], data.embeddings)
    return paths
