import csv
import io
import json

import numpy as np
import pytest

from cfgle import presets
from cfgle.harness import (
    CSV_HEADER,
    ConvergenceReport,
    ReferenceSnapshot,
    ReportRow,
    StudyError,
    StudyPlan,
    build_reference,
    fixed_tau_sweep,
    load_reference,
    observed_order,
    run_study,
    save_reference,
    sweep_to_csv,
)
from cfgle.scheme import FieldPair, SolverConfig


def test_observed_order_definition():
    assert observed_order(1e-3, 0.25e-3) == pytest.approx(2.0, abs=1e-14)
    assert observed_order(8.0, 0.5) == pytest.approx(4.0, abs=1e-14)


class TestPlan:
    def test_sorted(self):
        with pytest.raises(ValueError, match="sorted"):
            StudyPlan(resolutions=[(64, 64), (32, 32)])

    def test_even_for_richardson(self):
        with pytest.raises(ValueError, match="even"):
            StudyPlan(scheme_order=4, resolutions=[(32, 33)])

    def test_reference_divides(self):
        with pytest.raises(ValueError, match="divide"):
            StudyPlan(case="example2", reference="fine-mesh", reference_mesh=(100, 100),
                      resolutions=[(30, 30)])

    def test_reference_finer(self):
        with pytest.raises(ValueError, match="finer"):
            StudyPlan(case="example2", reference="fine-mesh", reference_mesh=(60, 16),
                      resolutions=[(30, 32)])

    def test_exact_needed(self):
        plan = StudyPlan(case="example2", resolutions=[(30, 8)])
        with pytest.raises(ValueError, match="fine-mesh"):
            run_study(plan)


class TestReport:
    def test_csv_format(self):
        rows = [ReportRow(1.5, 1 / 32, 1 / 32, 2.25e-6, 4.23e-5, wall_ms=12.3456, solver_iters=0),
                ReportRow(1.5, 1 / 64, 1 / 64, 5.625e-7, 1.05e-5, wall_ms=40.0, solver_iters=7)]
        rep = ConvergenceReport(rows)
        rep.fill_orders()
        lines = list(csv.reader(io.StringIO(rep.to_csv())))
        assert lines[0] == CSV_HEADER
        assert lines[0] == ["alpha", "tau", "h", "err_u_inf", "order_u", "err_v_inf", "order_v",
                            "wall_ms", "solver_iters"]
        assert lines[1][3] == "2.25000e-06"
        assert lines[1][4] == "" and lines[1][6] == ""
        assert lines[2][4] == "2.00000e+00"
        assert lines[2][8] == "7"
        assert lines[1][7] == "1.23456e+01"
        assert "0.00000e+00" == list(csv.reader(io.StringIO(rep.to_csv(timing=False))))[1][7]

    def test_orders_reset_per_alpha(self):
        rows = [ReportRow(1.2, 0.1, 0.1, 1.0, 1.0), ReportRow(1.2, 0.05, 0.05, 0.25, 0.5),
                ReportRow(1.8, 0.1, 0.1, 1.0, 1.0)]
        rep = ConvergenceReport(rows)
        rep.fill_orders()
        assert rows[1].order_u == pytest.approx(2.0) and rows[1].order_v == pytest.approx(1.0)
        assert rows[2].order_u is None

    def test_example1_study(self, tmp_path):
        plan = StudyPlan(case="example1", alphas=[2.0], resolutions=[(32, 32), (64, 64)],
                         norms=("max", "l2", "seminorm"))
        rep = run_study(plan)
        assert rep.rows[0].err_u_inf == pytest.approx(3.14e-6, rel=0.1)
        assert rep.rows[1].err_u_inf == pytest.approx(7.85e-7, rel=0.1)
        assert rep.rows[1].order_u == pytest.approx(2.0, abs=0.05)
        assert {"err_u_l2", "err_v_l2", "err_u_semi", "err_v_semi"} <= set(rep.rows[0].extra)
        rep.write(tmp_path, timing=False)
        meta = json.loads((tmp_path / "report.json").read_text())
        assert meta["reference"] == "exact solution"
        assert meta["scheme_order"] == 2
        assert (tmp_path / "report.csv").read_text().startswith("alpha,tau,h,")

    def test_workers_match_serial(self):
        kw = dict(case="example1", alphas=[1.5, 1.8], resolutions=[(16, 16), (32, 32)])
        a = run_study(StudyPlan(**kw)).to_csv(timing=False)
        b = run_study(StudyPlan(workers=3, **kw)).to_csv(timing=False)
        assert a == b

    def test_study_error_names_cell(self):
        plan = StudyPlan(case="example1", alphas=[1.5], resolutions=[(2000, 8)],
                         solver=SolverConfig(mode="krylov", tol=1e-15, max_iter=1))
        with pytest.raises(StudyError) as err:
            run_study(plan)
        assert err.value.cell == (1.5, 2000, 8)


class TestReference:
    def test_round_trip_bitwise(self, tmp_path):
        snap = build_reference(presets.example2(1.5), 60, 8)
        save_reference(tmp_path / "a.bin", snap)
        back = load_reference(tmp_path / "a.bin")
        np.testing.assert_array_equal(back.field.u, snap.field.u)
        np.testing.assert_array_equal(back.field.v, snap.field.v)
        assert back.meta == snap.meta
        assert {"alpha", "a", "b", "T", "M", "N", "scheme_order", "spec_hash"} == set(back.meta)
        save_reference(tmp_path / "b.bin", build_reference(presets.example2(1.5), 60, 8))
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_file_layout(self, tmp_path):
        field = FieldPair(np.array([1 + 2j, 3 + 4j]), np.array([5 + 6j, 7 + 8j]), 4)
        meta = {"alpha": 1.5, "M": 3, "N": 4}
        save_reference(tmp_path / "s.bin", ReferenceSnapshot(field, meta))
        raw = (tmp_path / "s.bin").read_bytes()
        head, body = raw.split(b"\n", 1)
        assert json.loads(head) == meta
        np.testing.assert_array_equal(np.frombuffer(body, "<f8"), np.arange(1, 9, dtype=float))

    def test_truncated_file(self, tmp_path):
        field = FieldPair(np.ones(2, complex), np.ones(2, complex), 1)
        save_reference(tmp_path / "s.bin", ReferenceSnapshot(field, {"M": 5, "N": 1}))
        with pytest.raises(ValueError):
            load_reference(tmp_path / "s.bin")

    @pytest.mark.parametrize("order", [2, 4])
    def test_self_reference_zero_error(self, order):
        plan = StudyPlan(case="example2", scheme_order=order, alphas=[1.8],
                         resolutions=[(60, 8)], reference="fine-mesh", reference_mesh=(60, 8),
                         reference_order=order)
        rep = run_study(plan)
        assert rep.rows[0].err_u_inf == 0.0 and rep.rows[0].err_v_inf == 0.0
        assert "fine mesh M=60 N=8" in rep.metadata["reference"]

    def test_prebuilt_reference_used(self):
        spec = presets.example2(1.5)
        ref = build_reference(spec, 120, 16)
        plan = StudyPlan(case="example2", alphas=[1.5], resolutions=[(30, 16), (60, 16)],
                         reference="fine-mesh", reference_mesh=(120, 16))
        rep = run_study(plan, references={1.5: ref})
        assert rep.metadata["reference_snapshots"]["1.5"] == ref.meta
        assert rep.rows[0].err_u_inf > rep.rows[1].err_u_inf > 0


class TestSweep:
    def test_single_row(self):
        rows = fixed_tau_sweep(presets.example1(1.5), 0.1, [1 / 16])
        assert len(rows) == 1 and rows[0]["M"] == 16
        text = sweep_to_csv(rows)
        assert text.splitlines()[0] == "h,err_u_inf,err_v_inf"

    def test_tau_must_divide(self):
        with pytest.raises(ValueError):
            fixed_tau_sweep(presets.example1(1.5), 0.3, [1 / 16])

    def test_small_tau_recovers_spatial_error(self):
        # at fixed h, shrinking tau leaves only the O(h^2) spatial error
        spec = presets.example1(1.5)
        coarse = fixed_tau_sweep(spec, 1 / 64, [1 / 16])[0]["err_u_inf"]
        fine = fixed_tau_sweep(spec, 1 / 512, [1 / 16])[0]["err_u_inf"]
        finer = fixed_tau_sweep(spec, 1 / 1024, [1 / 16])[0]["err_u_inf"]
        assert abs(fine - finer) <= 0.02 * finer
        assert coarse != pytest.approx(finer, rel=1e-3)
