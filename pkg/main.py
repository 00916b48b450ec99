import logging
import sys
from typing import Dict, List, Optional, Sequence

import click
import numpy as np
import pandas as pd

# Import custom modules
import fidelity
import instances
import ksw_solver
import serialization
from config import Config
from enorm import enorm
from errors import EXIT_OK, EXIT_VERIFICATION_FAILURE, KswError, SolverNonConvergence
from instances import InstanceSpec
from verification import VerificationConfig, run_verification_suite

logger = logging.getLogger(__name__)


class KswApp:
    def __init__(self, n_jobs: Optional[int] = None):
        self.n_jobs = Config.N_JOBS if n_jobs is None else n_jobs

    def load_state(self, path: str) -> np.ndarray:
        return serialization.matrix_from_json(serialization.read_json(path))

    def compare_states(self, rho_path: str, sigma_path: str) -> Dict[str, float]:
        """Fidelity and Bures distance of two positive operators."""
        rho, sigma = self.load_state(rho_path), self.load_state(sigma_path)
        return {
            "fidelity": fidelity.fidelity(rho, sigma),
            "bures": fidelity.bures_distance(rho, sigma),
        }

    def energy_norm(self, x_path: str, hamiltonian_path: str, energy: float) -> float:
        x = serialization.matrix_from_json(serialization.read_json(x_path))
        return enorm(x, serialization.load_hamiltonian(hamiltonian_path), energy)

    def solve(
        self,
        phi_path: str,
        psi_path: str,
        hamiltonian_path: str,
        energy: float,
        method: str,
        pad: int,
        tol: float,
        schedule: Sequence[float],
        restarts: int,
    ) -> Dict:
        """Run the requested estimators and collect their results."""
        phi = serialization.load_operation(phi_path)
        psi = serialization.load_operation(psi_path)
        ham = serialization.load_hamiltonian(hamiltonian_path)
        results: Dict = {"energy": float(energy)}
        if method in ("ksw", "both"):
            cert = ksw_solver.solve_with_continuation(phi, psi, ham, energy, schedule, pad, tol)
            results["certificate"] = serialization.certificate_to_dict(cert)
        if method in ("direct", "both"):
            results["direct"] = ksw_solver.direct_ecbures(
                phi, psi, ham, energy, restarts, Config.SEED, self.n_jobs
            )
        return results

    def summary_table(self, results: Dict) -> pd.DataFrame:
        """Bounds of every estimator side by side."""
        rows: List[Dict] = []
        if "certificate" in results:
            cert = results["certificate"]
            rows.append({
                'Method': 'ksw',
                'Lower': cert["lower_bound"],
                'Upper': cert["upper_bound"],
                'Gap': cert["gap"],
                'Converged': cert["converged"],
                'Iterations': cert["iterations"],
            })
        if "direct" in results:
            rows.append({
                'Method': 'direct',
                'Lower': results["direct"],
                'Upper': np.nan,
                'Gap': np.nan,
                'Converged': True,
                'Iterations': 0,
            })
        return pd.DataFrame(rows)

    def verify(self, trials: int, seed: int, dims: Sequence[int], report_path: Optional[str]):
        cfg = VerificationConfig(seed=seed, dims=tuple(dims), trials=trials, n_jobs=self.n_jobs)
        report = run_verification_suite(cfg)
        if report_path:
            with open(report_path, "w", encoding="utf-8") as fh:
                fh.write(report.to_json())
            logger.info("Report written to %s", report_path)
        return report


def _schedule(ctx, param, value):
    if value is None:
        return Config.schedule()
    try:
        return Config.parse_schedule(value)
    except KswError as e:
        raise click.BadParameter(str(e))


def _dims(ctx, param, value):
    try:
        dims = tuple(int(x) for x in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected dA,dB,k, got {value!r}")
    if len(dims) != 3 or min(dims) < 1:
        raise click.BadParameter(f"expected three positive integers, got {value!r}")
    return dims


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log solver progress at DEBUG level.")
@click.option("--jobs", type=int, default=None, help="Worker processes for restarts and trials.")
@click.pass_context
def cli(ctx, verbose, jobs):
    """Energy-constrained distances between quantum operations."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, Config.LOG_LEVEL, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if not Config.validate():
        raise click.UsageError("Invalid KSW_* environment settings")
    ctx.obj = KswApp(jobs)


@cli.command("fidelity")
@click.option("--rho", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--sigma", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def fidelity_cmd(app: KswApp, rho, sigma):
    """Fidelity of two positive operators."""
    click.echo(repr(app.compare_states(rho, sigma)["fidelity"]))
    return EXIT_OK


@cli.command("bures")
@click.option("--rho", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--sigma", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def bures_cmd(app: KswApp, rho, sigma):
    """Bures distance of two positive operators."""
    click.echo(repr(app.compare_states(rho, sigma)["bures"]))
    return EXIT_OK


@cli.command("enorm")
@click.option("--x", "x_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hamiltonian", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--energy", required=True, type=float)
@click.pass_obj
def enorm_cmd(app: KswApp, x_path, hamiltonian, energy):
    """Operator E-norm of a matrix."""
    click.echo(repr(app.energy_norm(x_path, hamiltonian, energy)))
    return EXIT_OK


@cli.command("ecbures")
@click.option("--phi", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--psi", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hamiltonian", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--energy", required=True, type=float)
@click.option("--method", type=click.Choice(["ksw", "direct", "both"]), default="ksw", show_default=True)
@click.option("--pad", type=click.IntRange(min=0), default=Config.PAD, show_default=True)
@click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=Config.TOL, show_default=True)
@click.option("--schedule", callback=_schedule, default=None, help="Comma separated smoothing weights.")
@click.option("--restarts", type=click.IntRange(min=1), default=Config.RESTARTS, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Write results as JSON.")
@click.pass_obj
def ecbures_cmd(app: KswApp, phi, psi, hamiltonian, energy, method, pad, tol, schedule, restarts, output):
    """Certified bounds on the energy-constrained Bures distance."""
    results = app.solve(phi, psi, hamiltonian, energy, method, pad, tol, schedule, restarts)
    click.echo(app.summary_table(results).to_string(index=False))
    if output:
        serialization.write_json(output, results)
    if "certificate" in results and not results["certificate"]["converged"]:
        raise SolverNonConvergence(f"Sandwich did not close to {tol}: gap {results['certificate']['gap']:.3e}")
    return EXIT_OK


@cli.command("gen")
@click.option("--kind", type=click.Choice(list(instances.KINDS[:-1]) + ["hamiltonian"]), default="random-channel")
@click.option("--d-a", "d_a", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--d-b", "d_b", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--kraus", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--seed", type=int, default=Config.SEED, show_default=True)
@click.option("--strength", type=float, default=1.0, show_default=True)
@click.option("--spacing", type=click.Choice(list(instances.SPACINGS[:-1])), default="linear")
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def gen_cmd(kind, d_a, d_b, kraus, seed, strength, spacing, output):
    """Generate a seeded operation or Hamiltonian as JSON."""
    if kind == "hamiltonian":
        data = serialization.hamiltonian_to_dict(instances.gen_hamiltonian(d_a, spacing, seed))
    else:
        op = instances.generate(InstanceSpec(kind, d_a, d_b, kraus, seed, strength))
        data = serialization.operation_to_dict(op)
    if output:
        serialization.write_json(output, data)
    else:
        click.echo(serialization.dumps(data), nl=False)
    return EXIT_OK


@cli.command("verify-ksw")
@click.option("--trials", type=click.IntRange(min=1), default=30, show_default=True)
@click.option("--seed", type=int, default=Config.SEED, show_default=True)
@click.option("--dims", callback=_dims, default="2,2,2", show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def verify_cmd(app: KswApp, trials, seed, dims, report_path):
    """Run the acceptance checks and print the report."""
    report = app.verify(trials, seed, dims, report_path)
    click.echo(report.to_text())
    return EXIT_OK if report.passed else EXIT_VERIFICATION_FAILURE


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        code = cli.main(args=list(argv) if argv is not None else None, standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("Aborted", err=True)
        return 1
    except KswError as e:
        click.echo(f"Error: {e}", err=True)
        return e.exit_code
    return code if isinstance(code, int) else EXIT_OK


# Run the application
if __name__ == "__main__":
    sys.exit(main())
