import logging
import struct

import numpy as np
import pytest

from jetles.core import generate_box_grid, generate_jet_grid
from jetles.io import (
    ConfigError,
    ContainerError,
    DimensionMismatch,
    MagicMismatch,
    RankMismatch,
    SolutionContainer,
    Truncated,
    VersionMismatch,
    append_snapshot,
    parse_config,
    read_grid,
    read_snapshots,
    write_grid,
)
from jetles.partition import build_map, local_block

HEAD = 4 + 4 + 4 + 3 * 8 + 6 * 8 + 4 + 4
SECTION = 16 + 8 + 8


@pytest.fixture
def grid_file(tmp_path):
    grid = generate_jet_grid(6, 4, 9)
    block = local_block(grid, build_map(6, 9, 2, 2), 3)
    path = tmp_path / "g.jzg"
    write_grid(path, block, rank=3)
    return block, path


class TestGrid:
    def test_round_trip(self, grid_file):
        block, path = grid_file
        back = read_grid(path, rank=3).to_block()
        np.testing.assert_array_equal(back.coords, block.coords)
        assert back.pad_modes == block.pad_modes
        assert back.global_offset == block.global_offset
        assert back.global_dims == block.global_dims

    def test_round_trip_with_periods(self, tmp_path):
        block = generate_box_grid((5, 6, 7), periodic=(True, False, True), warp=0.05)
        write_grid(tmp_path / "b.jzg", block)
        back = read_grid(tmp_path / "b.jzg").to_block()
        np.testing.assert_array_equal(back.coords, block.coords)
        assert back.periods == block.periods

    def test_header_layout(self, grid_file):
        block, path = grid_file
        data = path.read_bytes()
        magic, version, rank = struct.unpack_from("<4sIi", data)
        assert (magic, version, rank) == (b"JZG1", 1, 3)
        name, off, length = struct.unpack_from("<16sQQ", data, HEAD)
        assert name.rstrip(b"\0") == b"coords"
        assert off == HEAD + 2 * SECTION and length == 8 * block.coords.size
        # xi varies fastest on disk
        first = np.frombuffer(data[off:off + 16], "<f8")
        np.testing.assert_array_equal(first, block.coords[0, :2, 0, 0])

    def test_bad_magic(self, grid_file):
        _, path = grid_file
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(MagicMismatch):
            read_grid(path)

    def test_bad_version(self, grid_file):
        _, path = grid_file
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(data))
        with pytest.raises(VersionMismatch):
            read_grid(path)

    def test_wrong_rank(self, grid_file):
        with pytest.raises(RankMismatch):
            read_grid(grid_file[1], rank=0)

    def test_inconsistent_dims(self, grid_file):
        _, path = grid_file
        data = bytearray(path.read_bytes())
        data[12:20] = struct.pack("<Q", 2)  # global nxi smaller than the stored range
        path.write_bytes(bytes(data))
        with pytest.raises(DimensionMismatch):
            read_grid(path)

    def test_truncation_at_section_boundaries(self, grid_file):
        block, path = grid_file
        data = path.read_bytes()
        coords_end = HEAD + 2 * SECTION + 8 * block.coords.size
        expected = {
            2: MagicMismatch,
            HEAD - 1: Truncated,
            HEAD: Truncated,
            HEAD + SECTION: Truncated,
            HEAD + 2 * SECTION: Truncated,
            HEAD + 2 * SECTION + 8: Truncated,
            coords_end - 1: Truncated,
            coords_end: Truncated,
            len(data) - 1: Truncated,
        }
        for cut, err in expected.items():
            path.write_bytes(data[:cut])
            with pytest.raises(err) as info:
                read_grid(path)
            if cut > HEAD + 2 * SECTION:
                assert info.value.section == ("coords" if cut < coords_end else "meta")

    def test_every_truncation_raises(self, tmp_path):
        block = generate_box_grid((3, 3, 3))
        path = tmp_path / "t.jzg"
        write_grid(path, block)
        data = path.read_bytes()
        # every byte through the header and index, then a stride through the payload
        cuts = sorted(set(range(0, HEAD + 2 * SECTION + 16)) | set(range(0, len(data), 7)))
        for cut in cuts:
            path.write_bytes(data[:cut])
            with pytest.raises(ContainerError):
                read_grid(path)


def snapshots(rng, n, dims=(3, 4, 5)):
    return [(rng.standard_normal((5,) + dims), 10 * (k + 1), 0.5 * (k + 1)) for k in range(n)]


class TestSolution:
    def test_append_and_read(self, tmp_path, rng):
        path = tmp_path / "s.jzs"
        sol = SolutionContainer.create(path, 2, (3, 4, 5))
        recs = snapshots(rng, 3)
        for q, it, t in recs:
            append_snapshot(sol, q, it, t)
        got = read_snapshots(path, rank=2)
        assert len(sol) == 3 and len(got) == 3
        for s, (q, it, t) in zip(got, recs):
            np.testing.assert_array_equal(s.q, q)
            assert s.iteration == it and s.time == t
        np.testing.assert_array_equal(sol.read(-1).q, recs[-1][0])

    def test_times_strictly_increase(self, tmp_path, rng):
        sol = SolutionContainer.create(tmp_path / "s.jzs", 0, (3, 4, 5))
        q = rng.standard_normal((5, 3, 4, 5))
        sol.append(q, 1, 1.0)
        with pytest.raises(ValueError):
            sol.append(q, 2, 1.0)

    def test_dims_checked(self, tmp_path):
        sol = SolutionContainer.create(tmp_path / "s.jzs", 0, (3, 4, 5))
        with pytest.raises(DimensionMismatch):
            sol.append(np.zeros((5, 3, 4, 6)), 1, 1.0)

    def test_reopen_and_append(self, tmp_path, rng):
        path = tmp_path / "s.jzs"
        sol = SolutionContainer.create(path, 0, (3, 4, 5))
        recs = snapshots(rng, 3)
        sol.append(*recs[0])
        again = SolutionContainer.open(path, rank=0)
        assert len(again) == 1
        again.append(*recs[1])
        again.append(*recs[2])
        got = read_snapshots(path)
        assert [s.iteration for s in got] == [10, 20, 30]

    def test_wrong_rank_and_magic(self, tmp_path):
        path = tmp_path / "s.jzs"
        SolutionContainer.create(path, 1, (3, 4, 5))
        with pytest.raises(RankMismatch):
            read_snapshots(path, rank=0)
        data = bytearray(path.read_bytes())
        data[:4] = b"JZG1"
        path.write_bytes(bytes(data))
        with pytest.raises(MagicMismatch):
            read_snapshots(path)

    def test_torn_record_dropped(self, tmp_path, rng, caplog):
        path = tmp_path / "s.jzs"
        sol = SolutionContainer.create(path, 0, (3, 4, 5))
        recs = snapshots(rng, 3)
        for r in recs:
            sol.append(*r)
        data = path.read_bytes()
        rec_size = 32 + 8 * 5 * 60
        head = 4 + 4 + 4 + 24 + 4
        # crash while writing record 3: no trailer yet and a partial payload
        torn = data[:head + 2 * rec_size + 100]
        path.write_bytes(torn)
        with caplog.at_level(logging.WARNING, logger="jetles"):
            got = read_snapshots(path)
        assert [s.iteration for s in got] == [10, 20]
        assert "recovered 2 record" in caplog.text
        # reopening repairs the file so later appends are readable
        reopened = SolutionContainer.open(path)
        reopened.append(*recs[2])
        got = read_snapshots(path)
        assert [s.iteration for s in got] == [10, 20, 30]
        np.testing.assert_array_equal(got[-1].q, recs[2][0])

    def test_truncation_never_returns_corrupt_records(self, tmp_path, rng):
        path = tmp_path / "s.jzs"
        dims = (2, 2, 3)
        sol = SolutionContainer.create(path, 0, dims)
        recs = snapshots(rng, 3, dims)
        for r in recs:
            sol.append(*r)
        data = path.read_bytes()
        head = 4 + 4 + 4 + 24 + 4
        rec_size = 32 + 8 * 5 * 12
        for cut in range(len(data)):
            path.write_bytes(data[:cut])
            if cut < head:
                with pytest.raises(ContainerError):
                    read_snapshots(path)
                continue
            got = read_snapshots(path)
            complete = min(3, (cut - head) // rec_size)
            assert len(got) == complete
            for s, (q, it, t) in zip(got, recs):
                np.testing.assert_array_equal(s.q, q)
                assert (s.iteration, s.time) == (it, t)

    def test_flipped_payload_bit_detected(self, tmp_path, rng):
        path = tmp_path / "s.jzs"
        sol = SolutionContainer.create(path, 0, (3, 4, 5))
        for r in snapshots(rng, 2):
            sol.append(*r)
        data = bytearray(path.read_bytes())
        data[40 + 32 + 8] ^= 0x01  # inside the first payload
        path.write_bytes(bytes(data))
        assert read_snapshots(path) == []


MINIMAL = """
# jet run
mach = 1.4
gamma = 1.4
pr = 0.72
dt = 1e-4
"""


class TestConfig:
    def test_minimal(self):
        cfg, run = parse_config(MINIMAL)
        assert (cfg.mach_jet, cfg.gamma, cfg.prandtl, cfg.dt) == (1.4, 1.4, 0.72, 1e-4)
        assert run.mesh == (32, 32, 37) and run.npx == 1 and run.steps == 100

    def test_run_parameters(self):
        cfg, run = parse_config(MINIMAL + "mesh = 64x64x37\nnpx = 2\nnpz = 4\nsteps = 7\n"
                                "snapshot_interval = 3\nexchange = legacy\nre = 1000\n")
        assert run.mesh == (64, 64, 37) and (run.npx, run.npz, run.steps) == (2, 4, 7)
        assert run.snapshot_interval == 3 and run.exchange == "legacy"
        assert cfg.reynolds == 1000.0

    def test_gamma_invariant(self):
        with pytest.raises(ConfigError, match="gamma"):
            parse_config(MINIMAL.replace("gamma = 1.4", "gamma = 0.9"))

    def test_duplicate_last_wins(self, caplog):
        with caplog.at_level(logging.WARNING, logger="jetles"):
            cfg, _ = parse_config(MINIMAL + "dt = 2e-4\n")
        assert cfg.dt == 2e-4
        assert "duplicate key 'dt'" in caplog.text

    @pytest.mark.parametrize("text,match", [
        (MINIMAL + "colour = red\n", "unknown key"),
        (MINIMAL.replace("dt = 1e-4", ""), "missing required"),
        (MINIMAL + "steps = many\n", "cannot parse"),
        (MINIMAL + "mesh = 4x4\n", "cannot parse"),
        (MINIMAL + "just words\n", "expected 'key = value'"),
        (MINIMAL + "exchange = carrier-pigeon\n", "exchange"),
        (MINIMAL + "npx = 0\n", "npx"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(text)
