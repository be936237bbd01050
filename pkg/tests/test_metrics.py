from iodsim.kernel import RandomStream
from iodsim.metrics import TraceRecorder, read_trace_csv, union_area


class TestUnionArea:
    def test_disjoint_squares_sum(self):
        rects = [(0, 0, 10, 10), (20, 0, 30, 10), (0, 20, 10, 30)]
        assert union_area(rects) == 300.0

    def test_full_overlap_counts_once(self):
        rects = [(0, 0, 10, 10), (0, 0, 10, 10), (2, 2, 8, 8)]
        assert union_area(rects) == 100.0

    def test_partial_overlap(self):
        # two 10x10 squares overlapping in a 5x10 band
        rects = [(0, 0, 10, 10), (5, 0, 15, 10)]
        assert union_area(rects) == 150.0

    def test_empty_and_degenerate(self):
        assert union_area([]) == 0.0
        assert union_area([(5, 5, 5, 9)]) == 0.0

    def test_against_grid_oracle(self):
        rng = RandomStream(9, "rects")
        for _case in range(20):
            rects = []
            for _ in range(12):
                x0 = rng.randint(0, 30)
                y0 = rng.randint(0, 30)
                rects.append((float(x0), float(y0),
                              float(x0 + rng.randint(1, 10)),
                              float(y0 + rng.randint(1, 10))))
            # integer-aligned rects: count covered unit cells
            cells = set()
            for x0, y0, x1, y1 in rects:
                for x in range(int(x0), int(x1)):
                    for y in range(int(y0), int(y1)):
                        cells.add((x, y))
            assert union_area(rects) == float(len(cells))


class TestTraceRoundTrip:
    def test_floats_round_trip_exactly(self, tmp_path):
        recorder = TraceRecorder()
        rng = RandomStream(4, "floats")
        originals = []
        for i in range(200):
            mj = rng.next_uniform() * 1e6
            originals.append(mj)
            recorder.record({"t_us": i, "kind": "energy", "node": "n",
                             "category": "tx", "mj": mj})
        path = tmp_path / "trace.csv"
        recorder.write_csv(path)
        rows = read_trace_csv(path)
        assert [r["mj"] for r in rows] == originals

    def test_bools_and_bytes(self, tmp_path):
        recorder = TraceRecorder()
        recorder.record({"t_us": 1, "kind": "detection", "positive": True,
                         "truth": False, "tx_id": b"\x01\xff"})
        path = tmp_path / "trace.csv"
        recorder.write_csv(path)
        row = read_trace_csv(path)[0]
        assert row["positive"] is True
        assert row["truth"] is False
        assert row["tx_id"] == "01ff"
