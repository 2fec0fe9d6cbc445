import matplotlib

matplotlib.use("Agg")

from pathlib import Path

from cvxmdp.mdp_vpdpo import VPDPO
from cvxmdp.presets import get_preset
from cvxmdp.viewer import Viewer


def _runner(name: str, T: int = 5) -> VPDPO:
    runner = VPDPO(get_preset(name).build(seed=0, T=T))
    runner.run()
    return runner


def test_render_and_save_constrained_run():
    runner = _runner("apprenticeship_tabular_constrained")
    viewer = Viewer()
    viewer.render(runner.report, title="constrained", show=False)
    viewer.render_dual(runner.records)
    assert viewer.ax_regret.get_legend_handles_labels()[1][:2] == ["mixed policy", "planned"]
    viewer.save_figure("curves.png")
    assert Path("curves.png").stat().st_size > 0


def test_unconstrained_run_marks_the_violation_panel():
    runner = _runner("apprenticeship_tabular")
    viewer = Viewer()
    viewer.render(runner.report, log_scale=True, show=False)
    assert [text.get_text() for text in viewer.ax_violation.texts] == ["unconstrained"]
    viewer.save_figure("unconstrained.png")
