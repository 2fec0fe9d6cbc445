from cvxmdp import VPDPO, get_preset
from sample_experiment import sample_experiment


def main() -> None:
    # Sample experiment
    runner = VPDPO(sample_experiment(seed=0, T=300))

    # Analysis
    runner.run()

    # Reporting
    print(runner)

    # Built-in preset
    preset = VPDPO(get_preset("apprenticeship_tabular").build(seed=0, T=300))
    preset.run()
    print(preset)

    # from cvxmdp.viewer import Viewer
    # Viewer().render(runner.report, title="sample experiment")


if __name__ == "__main__":
    main()
