import matplotlib.pyplot as plt
import numpy as np
import numpy.typing as npt

from cvxmdp.log import setup_logging
from cvxmdp.mdp_vpdpo import EpisodeRecord, RegretReport


class Viewer:
    # Curve colours
    mixed_color: str = "b"
    planned_color: str = "r"
    reference_color: str = "k"

    def __init__(
        self,
        line_width: float = 1.5,
        figsize: tuple[int, int] = (12, 5),
        theme: str = "ggplot",
    ) -> None:
        """
        Initialize the regret/violation viewer.

        Args:
            line_width: Width of the curves
            figsize: Figure size (width, height)
            theme: Matplotlib style theme
        """

        plt.style.use(theme)

        self.line_width = line_width
        self.fig, (self.ax_regret, self.ax_violation) = plt.subplots(1, 2, figsize=figsize)
        self.alpha: float = 0.8

        self.logger = setup_logging()

    def render_curve(
        self,
        ax,
        curve: npt.NDArray[np.float64],
        color: str,
        label: str,
        linestyle: str = "-",
    ) -> None:
        t = np.arange(1, curve.shape[0] + 1)
        ax.plot(
            t,
            curve,
            color=color,
            linewidth=self.line_width,
            linestyle=linestyle,
            alpha=self.alpha,
            label=label,
        )

    def render_sqrt_reference(self, ax, curve: npt.NDArray[np.float64]) -> None:
        """sqrt(t) scaled to the curve's final value, for eyeballing the rate."""
        final = curve[-1]
        if not np.isfinite(final) or final <= 0:
            return
        t = np.arange(1, curve.shape[0] + 1)
        ax.plot(
            t,
            final * np.sqrt(t / t[-1]),
            color=Viewer.reference_color,
            linewidth=0.8,
            linestyle=":",
            label="sqrt(t)",
        )

    def render(
        self,
        report: RegretReport,
        title: str = "VPDPO run",
        log_scale: bool = False,
        show: bool = True,
    ) -> None:
        """
        Render the regret and violation curves of a run.

        Args:
            report: Curves from regret_violation
            title: Figure title
            log_scale: Log-log axes
            show: Call plt.show() at the end
        """
        self.render_curve(self.ax_regret, report.regret_curve, Viewer.mixed_color, "mixed policy")
        self.render_curve(
            self.ax_regret, report.proxy_regret_curve, Viewer.planned_color, "planned", "--"
        )
        self.render_sqrt_reference(self.ax_regret, report.regret_curve)
        self.ax_regret.set_title("Regret(t)", fontsize=12)

        if np.all(np.isnan(report.violation_curve)):
            self.ax_violation.text(0.5, 0.5, "unconstrained", ha="center", va="center")
        else:
            self.render_curve(
                self.ax_violation, report.violation_curve, Viewer.mixed_color, "mixed policy"
            )
            self.render_curve(
                self.ax_violation,
                report.proxy_violation_curve,
                Viewer.planned_color,
                "planned",
                "--",
            )
            self.ax_violation.axhline(0.0, color=Viewer.reference_color, linewidth=0.8)
        self.ax_violation.set_title("Violation(t)", fontsize=12)

        for ax in (self.ax_regret, self.ax_violation):
            ax.set_xlabel("t", fontsize=10)
            if log_scale:
                ax.set_xscale("log")
                ax.set_yscale("symlog")
            if ax.get_legend_handles_labels()[0]:
                ax.legend()

        self.fig.suptitle(title, fontsize=15, fontweight="bold")
        self.logger.info(f"Rendered curves for '{title}' over {report.regret_curve.shape[0]} episodes")
        plt.tight_layout()

        if show:
            plt.show()

    def render_dual(self, records: list[EpisodeRecord]) -> None:
        """Overlay the multiplier gamma_t on the violation panel's twin axis."""
        gamma = np.array([r.dual.gamma for r in records])
        twin = self.ax_violation.twinx()
        twin.plot(np.arange(1, gamma.shape[0] + 1), gamma, color="g", linewidth=0.8, label="gamma")
        twin.set_ylabel("gamma", fontsize=10)

    def save_figure(self, filename: str = "vpdpo_curves.png", dpi: int = 150) -> None:
        """
        Save the rendered figure.

        Args:
            filename: Output filename
            dpi: Resolution of saved image
        """
        plt.savefig(filename, dpi=dpi, bbox_inches="tight")
        plt.close(self.fig)
