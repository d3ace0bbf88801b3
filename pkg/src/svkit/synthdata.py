"""Deterministic synthetic data: embeddings drawn from a known two-subspace
model, sampled trial lists, and a toy resonant-noise waveform corpus.

Randomness is split into purpose-keyed PCG64 streams (model, speaker,
utterance, trials, waveform) so that, for a fixed seed, adding utterances
or speakers never perturbs draws that already existed.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .backend import PldaModel, plda_llr
from .frontend import Waveform
from .trials import ScoreSet, TrialList

_STREAM_MODEL = 0
_STREAM_SPEAKER = 1
_STREAM_UTT = 2
_STREAM_TRIALS = 3
_STREAM_WAVE = 4


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *key))))


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    dim: int = 16
    num_speakers: int = 10
    utts_per_speaker: int = 5
    rank_speaker: int = 2
    rank_channel: int = 2
    speaker_scale: float = 3.0
    channel_scale: float = 1.0
    noise_scale: float = 0.5
    model: PldaModel | None = None
    # toy corpus knobs
    duration_s: float = 1.0
    sample_rate: int = 16000
    resonances_hz: tuple[float, ...] | None = None
    gain_jitter_db: float = 3.0

    def __post_init__(self):
        if self.num_speakers < 2:
            raise ValueError("need at least two speakers")
        if self.utts_per_speaker < 1:
            raise ValueError("need at least one utterance per speaker")


def true_model(spec: SynthSpec) -> PldaModel:
    """Ground-truth generative model, explicit or drawn from the model stream."""
    if spec.model is not None:
        return spec.model
    rng = _rng(spec.seed, _STREAM_MODEL)
    v = np.linalg.qr(rng.standard_normal((spec.dim, spec.rank_speaker)))[0] * spec.speaker_scale
    u = np.linalg.qr(rng.standard_normal((spec.dim, spec.rank_channel)))[0] * spec.channel_scale
    psi = np.full(spec.dim, spec.noise_scale**2)
    return PldaModel(np.zeros(spec.dim), v, u, psi)


def speaker_ids(spec: SynthSpec) -> list[str]:
    return [f"spk{i:03d}" for i in range(spec.num_speakers)]


def utt_ids(n: int) -> list[str]:
    return [f"u{i:06d}" for i in range(n)]


def gen_plda_data(spec: SynthSpec) -> tuple[np.ndarray, list[str], PldaModel]:
    """Embeddings x = mu + V h_spk + U w_utt + eps, plus labels and the model."""
    model = true_model(spec)
    d = model.dim
    sigma = np.sqrt(model.psi)
    embs = np.empty((spec.num_speakers * spec.utts_per_speaker, d))
    labels: list[str] = []
    row = 0
    for s, spk in enumerate(speaker_ids(spec)):
        h = _rng(spec.seed, _STREAM_SPEAKER, s).standard_normal(model.V.shape[1])
        for t in range(spec.utts_per_speaker):
            rng = _rng(spec.seed, _STREAM_UTT, s, t)
            w = rng.standard_normal(model.U.shape[1])
            eps = rng.standard_normal(d) * sigma
            embs[row] = model.mu + model.V @ h + model.U @ w + eps
            labels.append(spk)
            row += 1
    return embs, labels, model


def gen_trials(labels, n_target: int, n_nontarget: int, seed: int) -> TrialList:
    """Keyed trial list sampled uniformly without replacement."""
    labels = list(labels)
    n = len(labels)
    ids = utt_ids(n)
    i, j = np.triu_indices(n, k=1)
    same = np.array([labels[a] == labels[b] for a, b in zip(i, j)])
    tar_pool = np.flatnonzero(same)
    non_pool = np.flatnonzero(~same)
    if n_target > len(tar_pool) or n_nontarget > len(non_pool):
        raise ValueError("insufficient pairs for the requested trial counts")
    rng = _rng(seed, _STREAM_TRIALS)
    tar_pick = rng.choice(tar_pool, size=n_target, replace=False) if n_target else np.array([], dtype=int)
    non_pick = rng.choice(non_pool, size=n_nontarget, replace=False) if n_nontarget else np.array([], dtype=int)
    picks = np.concatenate([tar_pick, non_pick])
    key = np.concatenate([np.ones(n_target, bool), np.zeros(n_nontarget, bool)])
    return TrialList(
        [ids[i[p]] for p in picks],
        [ids[j[p]] for p in picks],
        key,
    )


def oracle_scores(model: PldaModel, embeddings: np.ndarray, trials: TrialList) -> ScoreSet:
    """Bayes log-likelihood-ratio scores under the ground-truth model."""
    by_id = {u: embeddings[k] for k, u in enumerate(utt_ids(len(embeddings)))}
    scores = np.array([
        plda_llr(model, by_id[e], by_id[t]) for e, t in zip(trials.enroll, trials.test)
    ])
    return ScoreSet(list(trials.enroll), list(trials.test), scores)


def _resonator(freq_hz: float, sample_rate: int, radius: float = 0.975):
    theta = 2.0 * np.pi * freq_hz / sample_rate
    return [1.0], [1.0, -2.0 * radius * np.cos(theta), radius * radius]


def gen_toy_corpus(spec: SynthSpec) -> tuple[list[Waveform], list[str]]:
    """Per-speaker resonant-filtered noise utterances with gain jitter."""
    if spec.resonances_hz is None:
        freqs = np.linspace(400.0, 3600.0, spec.num_speakers)
    else:
        if len(spec.resonances_hz) != spec.num_speakers:
            raise ValueError("one resonance per speaker required")
        freqs = np.asarray(spec.resonances_hz, dtype=np.float64)
    n_samples = int(round(spec.duration_s * spec.sample_rate))
    waves: list[Waveform] = []
    labels: list[str] = []
    for s, spk in enumerate(speaker_ids(spec)):
        b, a = _resonator(freqs[s], spec.sample_rate)
        for t in range(spec.utts_per_speaker):
            rng = _rng(spec.seed, _STREAM_WAVE, s, t)
            noise = rng.standard_normal(n_samples)
            x = scipy.signal.lfilter(b, a, noise)
            x *= 0.1 / np.sqrt(np.mean(x * x))
            jitter_db = rng.uniform(-spec.gain_jitter_db, spec.gain_jitter_db)
            x *= 10.0 ** (jitter_db / 20.0)
            waves.append(Waveform(x, spec.sample_rate))
            labels.append(spk)
    return waves, labels
