"""Synthetic catalog and day-structured user request generator.

Seeding tree (all streams are Philox, a counter-based generator)::

    catalog          SeedSequence([master, 0])
    user profile u   SeedSequence([master, 1, u])
    day e of user u  SeedSequence([master, 2, u, e])
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .core import RequestTrace, atomic_write_text
from .errors import DegenerateFeatureError, ExhaustedGenreError, InvalidParamsError

_CATALOG, _PROFILE, _DAY = 0, 1, 2


def philox(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


@dataclass
class Catalog:
    num_files: int
    num_genres: int
    genre_of: np.ndarray      # (F,) genre id per file
    popularity: np.ndarray    # (F,) P[g, f] for the file's own genre
    features: np.ndarray      # (F, d)
    global_popularity: np.ndarray | None = None

    def __post_init__(self):
        norms = np.linalg.norm(self.features, axis=1)
        if (norms == 0).any():
            raise DegenerateFeatureError(
                f"zero-norm feature vector for files {np.flatnonzero(norms == 0).tolist()}")
        self._unit = self.features / norms[:, None]

    def members(self, genre: int) -> np.ndarray:
        return np.flatnonzero(self.genre_of == genre)

    def cosine(self, a, b) -> np.ndarray:
        return self._unit[np.asarray(a)] @ self._unit[np.asarray(b)].T

    @property
    def featdim(self) -> int:
        return self.features.shape[1]

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"files={self.num_files} genres={self.num_genres} featdim={self.featdim}\n")
        for f in range(self.num_files):
            phi = ",".join(repr(float(x)) for x in self.features[f])
            buf.write(f"{f},{self.genre_of[f]},{float(self.popularity[f])!r},{phi}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "Catalog":
        lines = text.splitlines()
        header = dict(item.split("=", 1) for item in lines[0].split())
        F, G, d = (int(header[k]) for k in ("files", "genres", "featdim"))
        genre = np.zeros(F, dtype=np.int64)
        pop = np.zeros(F)
        feats = np.zeros((F, d))
        for line in lines[1:]:
            if not line.strip():
                continue
            parts = line.split(",")
            f = int(parts[0])
            genre[f] = int(parts[1])
            pop[f] = float(parts[2])
            feats[f] = [float(x) for x in parts[3:3 + d]]
        return cls(F, G, genre, pop, feats)

    def save(self, path) -> None:
        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path) -> "Catalog":
        with open(path, encoding="ascii") as fh:
            return cls.loads(fh.read())


@dataclass(frozen=True)
class UserProfile:
    genre_pref: np.ndarray
    rng_seed: int


@dataclass(frozen=True)
class WorkloadConfig:
    L: int = 7
    M: int = 5
    b: float = 0.5
    lam: float = 0.5
    Q: int = 107
    E: int = 80
    zipf_exponent: float = 1.2
    dirichlet_alpha: float = 0.3

    def __post_init__(self):
        if self.L < 1 or self.M < 1 or self.E < 1:
            raise InvalidParamsError("L, M and E must be positive")
        if self.Q < self.L or (self.Q - self.L) % self.M:
            raise InvalidParamsError(f"Q={self.Q} is not L + m*M for L={self.L}, M={self.M}")
        if not 0.0 < self.lam < 1.0:
            raise InvalidParamsError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.b > 0:
            raise InvalidParamsError("b must be positive")
        if not (self.zipf_exponent > 0 and self.dirichlet_alpha > 0):
            raise InvalidParamsError("zipf exponent and Dirichlet alpha must be positive")


def zipf_popularity(num_items: int, exponent: float) -> np.ndarray:
    if num_items < 1 or not exponent > 0:
        raise InvalidParamsError("need num_items >= 1 and exponent > 0")
    w = np.arange(1, num_items + 1, dtype=float) ** -exponent
    return w / w.sum()


def build_catalog(num_files: int, num_genres: int, zipf_exponent: float = 1.2,
                  featdim: int = 8, seed: int = 0) -> Catalog:
    """Contiguous genre blocks, Zipf ranks shuffled within each genre.

    Features are a per-genre anchor plus isotropic noise.
    """
    if num_genres < 1 or num_files < num_genres:
        raise InvalidParamsError("need at least one file per genre")
    rng = philox(seed, _CATALOG)
    genre_of = np.zeros(num_files, dtype=np.int64)
    popularity = np.zeros(num_files)
    features = np.zeros((num_files, featdim))
    for g, block in enumerate(np.array_split(np.arange(num_files), num_genres)):
        genre_of[block] = g
        popularity[block] = zipf_popularity(len(block), zipf_exponent)[rng.permutation(len(block))]
        anchor = rng.normal(size=featdim)
        features[block] = anchor + 0.5 * rng.normal(size=(len(block), featdim))
    return Catalog(num_files, num_genres, genre_of, popularity, features)


def sample_genre_preferences(num_genres: int, alpha: float, seed) -> UserProfile:
    if not alpha > 0:
        raise InvalidParamsError("alpha must be positive")
    if num_genres == 1:
        return UserProfile(np.ones(1), int(seed))
    rng = philox(*np.atleast_1d(seed).tolist())
    pref = rng.dirichlet(np.full(num_genres, float(alpha)))
    return UserProfile(pref / pref.sum(), int(np.atleast_1d(seed)[-1]))


def user_profiles(num_users: int, num_genres: int, alpha: float, master_seed: int):
    return [sample_genre_preferences(num_genres, alpha, (master_seed, _PROFILE, u))
            for u in range(num_users)]


def global_popularity(catalog: Catalog, profiles) -> np.ndarray:
    """G_f = sum_g mean_u(p[u, g]) * P[g, f]."""
    mean_pref = np.mean([p.genre_pref for p in profiles], axis=0)
    return mean_pref[catalog.genre_of] * catalog.popularity


def forgetting_weight(l, L: int, b: float):
    return np.exp(-(L - np.asarray(l, dtype=float) + 1.0) / b)


def similarity_score(history, candidate, catalog: Catalog, b: float, L: int | None = None):
    """Temporally weighted cosine similarity of ``candidate`` to ``history``.

    ``history`` is oldest-first. A history shorter than ``L`` is aligned to the
    most recent positions, so its last item always carries weight w_{L-1}.
    ``candidate`` may be a single id or an array of ids.
    """
    history = np.asarray(history, dtype=np.int64)
    L = len(history) if L is None else L
    l = np.arange(L - len(history), L)
    w = forgetting_weight(l, L, b)
    scalar = np.ndim(candidate) == 0
    cos = catalog.cosine(history, np.atleast_1d(candidate))
    score = w @ cos
    return float(score[0]) if scalar else score


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def refined_score(history, candidates, catalog: Catalog, b: float, lam: float,
                  L: int | None = None) -> dict[int, float]:
    candidates = np.asarray(sorted(candidates), dtype=np.int64)
    if len(candidates) == 0:
        raise ExhaustedGenreError("no candidate files left in genre")
    return dict(zip(candidates.tolist(), _refined(history, candidates, catalog, b, lam, L)))


def _refined(history, candidates, catalog, b, lam, L):
    sim = similarity_score(history, candidates, catalog, b, L)
    return lam * _softmax(sim) + (1.0 - lam) * _softmax(catalog.popularity[candidates])


def generate_user_day(profile: UserProfile, catalog: Catalog, config: WorkloadConfig,
                      rng: np.random.Generator) -> list[int]:
    L, M = config.L, config.M
    genre = int(rng.choice(catalog.num_genres, p=profile.genre_pref))
    members = catalog.members(genre)
    if len(members) < L + M:
        raise ExhaustedGenreError(
            f"genre {genre} has {len(members)} files, need at least L+M={L + M}")

    # stage 1: L distinct requests, first by popularity, then by refined score
    pop = catalog.popularity[members]
    day = [int(rng.choice(members, p=pop / pop.sum()))]
    while len(day) < L:
        cand = np.setdiff1d(members, day)
        p = _refined(day, cand, catalog, config.b, config.lam, L)
        day.append(int(rng.choice(cand, p=p)))

    # stage 2: deterministic Top-M blocks over the sliding window of L requests
    while len(day) < config.Q:
        window = day[-L:]
        cand = np.setdiff1d(members, window)
        score = _refined(window, cand, catalog, config.b, config.lam, L)
        order = np.lexsort((cand, -score))
        day.extend(int(f) for f in cand[order[:M]])
    return day


def generate_trace(num_users: int, catalog: Catalog, config: WorkloadConfig,
                   master_seed: int, profiles=None) -> RequestTrace:
    """E days of Q requests per user, all users advancing in lock-step."""
    if profiles is None:
        profiles = user_profiles(num_users, catalog.num_genres, config.dirichlet_alpha,
                                 master_seed)
    req = np.zeros((num_users, config.E * config.Q), dtype=np.int64)
    for u, prof in enumerate(profiles):
        stream = []
        for e in range(config.E):
            stream.extend(generate_user_day(prof, catalog, config,
                                            philox(master_seed, _DAY, u, e)))
        req[u] = stream
    return RequestTrace(req, catalog.num_files)
