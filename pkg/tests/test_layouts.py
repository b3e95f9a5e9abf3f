import numpy as np
import pytest

from fdsic.cancelers import build_ffnn_layout, build_lwgs_layout, build_mwgs_layout
from fdsic.errors import ConfigError


class TestLwgs:
    def test_square_ladder(self):
        lay = build_lwgs_layout(7, 7)
        assert [len(f) for f in lay.fanin] == [1, 2, 3, 4, 5, 6, 7]
        # newest sample feeds every neuron, the oldest exactly one
        assert all(0 in f for f in lay.fanin)
        assert sum(6 in f for f in lay.fanin) == 1

    def test_n9_m13_connection_count(self):
        lay = build_lwgs_layout(9, 13)
        assert lay.n_connections == 36 + 13
        assert lay.n_connections + lay.N == 58

    def test_single_neuron_gets_everything(self):
        lay = build_lwgs_layout(1, 5)
        assert lay.fanin == (tuple(range(5)),)

    def test_delay_fanout_profile(self):
        # delay 0 -> N neurons; 1 <= d <= N-2 -> N-d; d >= N-1 -> 1
        for n, m in [(3, 3), (5, 9), (9, 13), (13, 13), (1, 6)]:
            lay = build_lwgs_layout(n, m)
            for d in range(m):
                fanout = sum(d in f for f in lay.fanin)
                if d == 0:
                    assert fanout == n
                elif d <= n - 2:
                    assert fanout == n - d
                else:
                    assert fanout == 1

    @pytest.mark.parametrize("n,m", [(0, 5), (6, 5), (-1, 3)])
    def test_invalid_shapes(self, n, m):
        with pytest.raises(ConfigError):
            build_lwgs_layout(n, m)


class TestMwgs:
    def test_windows_slide_by_one(self):
        lay = build_mwgs_layout(4, 3, 7)
        assert lay.fanin[0] == tuple(range(7))
        assert lay.fanin[1] == (1, 2, 3)
        assert lay.fanin[2] == (2, 3, 4)
        assert lay.fanin[3] == (3, 4, 5)

    def test_clamped_windows_near_buffer_end(self):
        lay = build_mwgs_layout(12, 5, 13)
        assert lay.fanin[9] == (8, 9, 10, 11, 12)   # start = min(9, 8)
        assert lay.fanin[11] == (8, 9, 10, 11, 12)  # clamped
        assert lay.n_connections + lay.N == 80

    def test_every_window_neuron_has_w_consecutive(self):
        for n, w, m in [(2, 1, 4), (6, 4, 9), (12, 5, 13), (9, 7, 13)]:
            lay = build_mwgs_layout(n, w, m)
            for f in lay.fanin[1:]:
                assert len(f) == w
                assert list(f) == list(range(f[0], f[0] + w))

    def test_single_neuron_case(self):
        lay = build_mwgs_layout(1, 99, 5)  # W irrelevant at N=1
        assert lay.fanin == (tuple(range(5)),)
        assert lay.n_connections == 5

    @pytest.mark.parametrize("n,w,m", [(2, 0, 5), (2, 5, 5), (0, 1, 5)])
    def test_invalid_window(self, n, w, m):
        with pytest.raises(ConfigError):
            build_mwgs_layout(n, w, m)


class TestFfnn:
    def test_dense(self):
        lay = build_ffnn_layout(3, 2)
        assert lay.fanin == ((0, 1), (0, 1), (0, 1))

    def test_counts(self):
        lay = build_ffnn_layout(7, 13)
        assert lay.n_connections + lay.N == 7 * 14

    def test_minimal(self):
        lay = build_ffnn_layout(1, 1)
        assert lay.n_connections + lay.N == 2


class TestPacked:
    def test_csr_arrays(self):
        lay = build_mwgs_layout(3, 2, 5)
        fan_ptr, fan_delays = lay.packed()
        assert fan_ptr.dtype == np.int32 and fan_delays.dtype == np.int32
        assert list(fan_ptr) == [0, 5, 7, 9]
        assert list(fan_delays) == [0, 1, 2, 3, 4, 1, 2, 2, 3]
