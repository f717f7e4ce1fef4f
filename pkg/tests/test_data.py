"""Tensor I/O, manifests, and the synthetic generator."""

import json

import numpy as np
import pytest

from depthcal import CalibBounds
from depthcal.errors import DataError, DomainError
from depthcal.manifest import (
    Manifest,
    ManifestHeader,
    SampleRecord,
    load_manifest,
    load_sample,
    save_manifest,
)
from depthcal.npyio import read_npy, read_npy_header, write_npy
from depthcal.oracle import fit_oracle
from depthcal.synthetic import DEFAULT_FAMILIES, FamilySpec, SynthConfig, gen_synthetic

BOUNDS = CalibBounds()


class TestNpyIO:
    def test_roundtrip_2x3(self, tmp_path):
        arr = np.array([[1.0, -2.5, 3.25], [0.0, 7.5, -0.125]])
        p = tmp_path / "a.npy"
        write_npy(p, arr)
        back = read_npy(p)
        assert back.dtype == np.dtype("<f8")
        assert np.array_equal(back, arr)

    def test_roundtrip_f4(self, tmp_path):
        arr = np.array([1.5, 2.25, -3.75], dtype=np.float32)
        p = tmp_path / "a.npy"
        write_npy(p, arr, dtype="<f4")
        back = read_npy(p)
        assert back.dtype == np.dtype("<f4")
        assert np.array_equal(back, arr)

    def test_zero_length(self, tmp_path):
        p = tmp_path / "z.npy"
        write_npy(p, np.zeros((0,)))
        back = read_npy(p)
        assert back.shape == (0,)

    def test_corrupted_magic_is_parse_error(self, tmp_path):
        p = tmp_path / "bad.npy"
        write_npy(p, np.ones(3))
        data = bytearray(p.read_bytes())
        data[0] ^= 0xFF
        p.write_bytes(bytes(data))
        with pytest.raises(DataError, match="magic"):
            read_npy(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "t.npy"
        write_npy(p, np.ones((4, 4)))
        data = p.read_bytes()
        p.write_bytes(data[:-8])
        with pytest.raises(DataError, match="payload"):
            read_npy(p)

    def test_unsupported_dtype_rejected(self, tmp_path):
        p = tmp_path / "i.npy"
        np.save(p, np.arange(4, dtype=np.int64))
        with pytest.raises(DataError, match="dtype"):
            read_npy(p)

    def test_numpy_interop(self, tmp_path):
        # our subset must be readable by numpy and vice versa
        arr = np.linspace(0, 1, 12).reshape(3, 4)
        p1 = tmp_path / "ours.npy"
        write_npy(p1, arr)
        assert np.array_equal(np.load(p1), arr)
        p2 = tmp_path / "theirs.npy"
        np.save(p2, arr)
        assert np.array_equal(read_npy(p2), arr)

    def test_byte_stability(self, tmp_path):
        arr = np.array([[0.1, 0.2], [0.3, 0.4]])
        p1, p2 = tmp_path / "a.npy", tmp_path / "b.npy"
        write_npy(p1, arr)
        write_npy(p2, arr)
        assert p1.read_bytes() == p2.read_bytes()

    def test_nonfinite_write_rejected(self, tmp_path):
        with pytest.raises(DomainError):
            write_npy(tmp_path / "n.npy", np.array([np.nan]))

    def test_header_peek(self, tmp_path):
        p = tmp_path / "h.npy"
        write_npy(p, np.zeros((5, 7)), dtype="<f4")
        dtype, shape = read_npy_header(p)
        assert dtype == np.dtype("<f4")
        assert shape == (5, 7)


def _write_minimal_dataset(root, d_text=4, d_feat=3, n=1, k=2):
    records = []
    for i in range(n):
        sid = f"img{i}"
        write_npy(root / f"{sid}_y.npy", np.random.default_rng(i).uniform(0.1, 1, (4, 4)))
        write_npy(root / f"{sid}_gt.npy", np.full((4, 4), 2.0))
        embs = []
        for j in range(k):
            rel = f"{sid}_e{j}.npy"
            write_npy(root / rel, np.zeros(d_text))
            embs.append(rel)
        write_npy(root / f"{sid}_f.npy", np.zeros(d_feat))
        records.append(
            SampleRecord(
                id=sid,
                y_path=f"{sid}_y.npy",
                gt_path=f"{sid}_gt.npy",
                text_emb_paths=tuple(embs),
                feat_path=f"{sid}_f.npy",
            )
        )
    header = ManifestHeader(d_text=d_text, d_feat=d_feat, dataset="mini")
    m = Manifest(header=header, records=records, root=root)
    save_manifest(m, root / "manifest.jsonl")
    return m


class TestManifest:
    def test_minimal_roundtrip(self, tmp_path):
        _write_minimal_dataset(tmp_path)
        m = load_manifest(tmp_path / "manifest.jsonl")
        assert m.header.d_text == 4
        assert len(m.records) == 1
        s = load_sample(m, m.records[0])
        assert s.y.values.shape == (4, 4)
        assert s.embeddings.shape == (2, 4)
        assert s.feat.shape == (3,)

    def test_dim_mismatch_names_record(self, tmp_path):
        _write_minimal_dataset(tmp_path)
        # corrupt one embedding to the wrong width
        write_npy(tmp_path / "img0_e1.npy", np.zeros(9))
        with pytest.raises(DataError, match="img0"):
            load_manifest(tmp_path / "manifest.jsonl")

    def test_missing_file_names_record(self, tmp_path):
        _write_minimal_dataset(tmp_path)
        (tmp_path / "img0_f.npy").unlink()
        with pytest.raises(DataError, match="img0"):
            load_manifest(tmp_path / "manifest.jsonl")

    def test_iteration_order_is_file_order(self, tmp_path):
        _write_minimal_dataset(tmp_path, n=3)
        m = load_manifest(tmp_path / "manifest.jsonl")
        assert [r.id for r in m.records] == ["img0", "img1", "img2"]

    def test_save_load_identity(self, tmp_path):
        m0 = _write_minimal_dataset(tmp_path, n=2)
        m1 = load_manifest(tmp_path / "manifest.jsonl")
        assert m1.header == m0.header
        assert m1.records == m0.records

    def test_k_zero_rejected(self):
        with pytest.raises(DataError):
            SampleRecord(
                id="x", y_path="y", gt_path="g", text_emb_paths=(), feat_path="f"
            )

    def test_pyramid_mode(self, tmp_path):
        channels = (2, 2, 2, 2)
        rels = []
        rng = np.random.default_rng(0)
        for lvl, c in enumerate(channels):
            rel = f"p_l{lvl}.npy"
            write_npy(tmp_path / rel, rng.standard_normal((c, 3, 3)))
            rels.append(rel)
        write_npy(tmp_path / "p_y.npy", rng.uniform(0.1, 1, (4, 4)))
        write_npy(tmp_path / "p_gt.npy", np.full((4, 4), 2.0))
        write_npy(tmp_path / "p_e0.npy", np.zeros(4))
        rec = SampleRecord(
            id="p",
            y_path="p_y.npy",
            gt_path="p_gt.npy",
            text_emb_paths=("p_e0.npy",),
            feat_level_paths=tuple(rels),
        )
        header = ManifestHeader(d_text=4, d_feat=8, channels=channels)
        m = Manifest(header=header, records=[rec], root=tmp_path)
        save_manifest(m, tmp_path / "manifest.jsonl")
        loaded = load_manifest(tmp_path / "manifest.jsonl")
        s = load_sample(loaded, loaded.records[0])
        assert s.feat.shape == (8,)

    def test_header_must_be_first(self, tmp_path):
        p = tmp_path / "manifest.jsonl"
        p.write_text('{"id": "x"}\n', encoding="utf-8")
        with pytest.raises(DataError, match="header"):
            load_manifest(p)


class TestSynthetic:
    def test_noiseless_oracle_recovery(self, tmp_path):
        cfg = SynthConfig(n_samples=4, height=32, width=32, seed=11, k_captions=2)
        m = gen_synthetic(cfg, tmp_path / "d")
        truth = [
            json.loads(line)
            for line in (tmp_path / "d" / "truth.jsonl").read_text().splitlines()
        ]
        for rec, t in zip(m.records, truth):
            s = load_sample(m, rec)
            fit = fit_oracle(s.y, s.gt, cfg.bounds)
            assert abs(fit.alpha_raw - t["alpha_star"]) / t["alpha_star"] < 1e-9
            assert abs(fit.beta_raw - t["beta_star"]) / t["beta_star"] < 1e-9

    def test_same_seed_bit_identical_files(self, tmp_path):
        cfg = SynthConfig(n_samples=3, height=16, width=16, seed=5, k_captions=3,
                          sigma_n=0.05, sigma_t=0.1, sigma_f=0.1)
        gen_synthetic(cfg, tmp_path / "a")
        gen_synthetic(cfg, tmp_path / "b")
        for pa in sorted((tmp_path / "a").iterdir()):
            pb = tmp_path / "b" / pa.name
            assert pa.read_bytes() == pb.read_bytes(), pa.name

    def test_sigma_only_scales_noise_draws(self, tmp_path):
        base = SynthConfig(n_samples=2, height=8, width=8, seed=7, k_captions=2, sigma_t=0.1)
        other = SynthConfig(n_samples=2, height=8, width=8, seed=7, k_captions=2, sigma_t=0.2)
        gen_synthetic(base, tmp_path / "a")
        gen_synthetic(other, tmp_path / "b")
        # shared structure: identical Y, GT and truth; differing embeddings
        assert (tmp_path / "a" / "s0000_y.npy").read_bytes() == (
            tmp_path / "b" / "s0000_y.npy"
        ).read_bytes()
        assert (tmp_path / "a" / "truth.jsonl").read_bytes() == (
            tmp_path / "b" / "truth.jsonl"
        ).read_bytes()
        assert (tmp_path / "a" / "s0000_emb00.npy").read_bytes() != (
            tmp_path / "b" / "s0000_emb00.npy"
        ).read_bytes()

    def test_family_recoverable_from_prototypes_at_zero_noise(self, tmp_path):
        cfg = SynthConfig(n_samples=12, height=8, width=8, seed=3, k_captions=1)
        m = gen_synthetic(cfg, tmp_path / "d")
        truth = {
            json.loads(line)["id"]: json.loads(line)["family"]
            for line in (tmp_path / "d" / "truth.jsonl").read_text().splitlines()
        }
        # collect unique embeddings per family: they equal the prototypes
        protos = {}
        for rec in m.records:
            s = load_sample(m, rec)
            protos.setdefault(truth[rec.id], s.embeddings[0])
        for rec in m.records:
            s = load_sample(m, rec)
            sims = {f: float(p @ s.embeddings[0]) for f, p in protos.items()}
            assert max(sims, key=sims.get) == truth[rec.id]

    def test_valid_pixels_strictly_positive(self, tmp_path):
        cfg = SynthConfig(n_samples=3, height=16, width=16, seed=1, sigma_n=0.1,
                          k_captions=1)
        m = gen_synthetic(cfg, tmp_path / "d")
        for rec in m.records:
            s = load_sample(m, rec)
            assert np.all(s.gt.values[s.gt.mask] > 0.0)
            # ~5% invalidated
            frac = 1.0 - s.gt.mask.mean()
            assert 0.0 <= frac < 0.2

    def test_denominator_stays_above_floor(self, tmp_path):
        cfg = SynthConfig(n_samples=4, height=8, width=8, seed=9, k_captions=1)
        m = gen_synthetic(cfg, tmp_path / "d")
        truth = [
            json.loads(line)
            for line in (tmp_path / "d" / "truth.jsonl").read_text().splitlines()
        ]
        for rec, t in zip(m.records, truth):
            s = load_sample(m, rec)
            denom = t["alpha_star"] * s.y.values + t["beta_star"]
            assert np.all(denom >= cfg.bounds.beta_min + 0.05 * t["alpha_star"] - 1e-12)
            assert np.all(denom > cfg.bounds.eps)

    def test_manifest_passes_validation(self, tmp_path):
        cfg = SynthConfig(n_samples=2, height=8, width=8, seed=2, k_captions=2)
        gen_synthetic(cfg, tmp_path / "d")
        m = load_manifest(tmp_path / "d" / "manifest.jsonl")
        assert len(m.records) == 2
        assert m.header.d_text == cfg.d_text

    def test_range_outside_bounds_rejected(self):
        with pytest.raises(DataError):
            SynthConfig(
                families=(FamilySpec(0.0, 0.1, beta_lo=1.5, beta_hi=2.5),),
            )

    def test_default_families_disjoint_shift_ranges(self):
        spans = [(f.beta_lo, f.beta_hi) for f in DEFAULT_FAMILIES]
        for (a_lo, a_hi), (b_lo, b_hi) in zip(spans, spans[1:]):
            assert a_hi < b_lo
