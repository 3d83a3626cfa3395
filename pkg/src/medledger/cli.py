"""Operator CLI: chain lifecycle, inspection, scenario replay, benchmarks.

Exit codes: 0 ok, 1 usage error, 2 validation failure, 3 runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import Config, apply_env_overrides, load_effective_config
from .errors import MedledgerError
from .node import ChainNode
from .service import ServiceCore


class ValidationFailure(Exception):
    pass


def _load_config(path: str) -> Config:
    if not Path(path).exists():
        raise click.UsageError(f"config file {path} does not exist (run `medledger init {path}` first)")
    return load_effective_config(path)


def _echo_json(value) -> None:
    click.echo(json.dumps(value, indent=2, sort_keys=True))


@click.group()
def cli():
    """Operate a single-node health-record ledger."""


@cli.command()
@click.argument("config_path", type=click.Path())
def init(config_path: str):
    """Write genesis and instantiate the system contracts.

    If CONFIG_PATH does not exist, a default config (with a generated admin
    API key) is written there first.
    """
    path = Path(config_path)
    if path.exists():
        config = apply_env_overrides(Config.load(path))
    else:
        config = apply_env_overrides(Config()).with_admin_key()
        config.save(path)
        click.echo(f"wrote default config to {path}")
    if not config.admin_api_key:
        config = config.with_admin_key()
        config.save(path)
    node = ChainNode.bootstrap(config)
    click.echo(f"initialized chain in {config.data_dir}")
    click.echo(f"admin API key: {config.admin_api_key}")
    for name, address in config.system_addresses.items():
        click.echo(f"  {name}: {address}")
    click.echo(f"genesis block {node.blocks[0].header_hash}")


@cli.command()
@click.argument("config_path", type=click.Path())
def serve(config_path: str):
    """Run the HTTP service."""
    import uvicorn

    from .api import create_app

    config = _load_config(config_path)
    core = ServiceCore(config)
    click.echo(f"listening on http://{config.listen_host}:{config.listen_port}")
    uvicorn.run(create_app(core), host=config.listen_host, port=config.listen_port, log_level="warning")


@cli.command()
@click.argument("config_path", type=click.Path())
@click.option("--max-txs", type=int, default=None, help="Cap on transactions drained into the block.")
def mine(config_path: str, max_txs):
    """Mine one block from the mempool."""
    config = _load_config(config_path)
    core = ServiceCore(config)
    _echo_json(core.mine(max_txs))


@cli.command()
@click.argument("config_path", type=click.Path())
def validate(config_path: str):
    """Re-validate the persisted chain; exits 2 on failure."""
    from .ledger import validate_chain

    config = _load_config(config_path)
    with open(config.blocks_path, "r", encoding="utf-8") as fh:
        block_dicts = []
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                block_dicts.append(json.loads(line))
            except ValueError as exc:
                _echo_json({"valid": False, "firstFailure": {"height": i, "rule": "decode", "detail": str(exc)}})
                raise ValidationFailure(f"block line {i} is not valid JSON") from exc
    report = validate_chain(block_dicts, config.difficulty)
    _echo_json(report.to_dict())
    if not report.valid:
        raise ValidationFailure(str(report.first_failure))


@cli.group()
def inspect():
    """Inspect blocks, transactions, and accounts."""


@inspect.command("block")
@click.argument("config_path", type=click.Path())
@click.argument("height", type=int)
def inspect_block(config_path: str, height: int):
    node = ChainNode.load(_load_config(config_path))
    _echo_json(node.get_block(height).to_dict())


@inspect.command("tx")
@click.argument("config_path", type=click.Path())
@click.argument("tx_id")
def inspect_tx(config_path: str, tx_id: str):
    node = ChainNode.load(_load_config(config_path))
    receipt = node.get_receipt(tx_id)
    _echo_json(receipt.to_dict())


@inspect.command("account")
@click.argument("config_path", type=click.Path())
@click.argument("address")
def inspect_account(config_path: str, address: str):
    node = ChainNode.load(_load_config(config_path))
    account = node.world.get(address)
    if account is None:
        raise MedledgerError(f"no account at {address}")
    _echo_json(
        {
            "address": account.address,
            "kind": account.kind,
            "balance": account.balance,
            "nonce": account.nonce,
            "contractType": list(account.contract_type) if account.contract_type else None,
            "storage": account.storage,
        }
    )


@cli.group()
def scenario():
    """Scenario scripts."""


@scenario.command("run")
@click.argument("script", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the receipts summary here.")
def scenario_run(script: str, config_path: str, out_path):
    """Replay a JSON-lines script of API calls."""
    from .scenario import run_scenario

    config = _load_config(config_path)
    core = ServiceCore(config)
    summary = run_scenario(core, script, out_path, echo=click.echo)
    failures = [row for row in summary if row["status"] >= 500]
    click.echo(f"{len(summary)} steps, {len(failures)} server errors")
    if failures:
        raise ValidationFailure(f"{len(failures)} scenario steps returned 5xx")


@cli.group()
def bench():
    """Benchmark harnesses."""


@bench.command("flyweight")
@click.option("--patients", type=int, default=1000, show_default=True)
@click.option("--plans", type=int, default=5, show_default=True)
@click.option("--no-flyweight", "baseline_only", is_flag=True, help="Run only the duplicating baseline.")
@click.option("--csv", "csv_path", type=click.Path(), default="bench_flyweight.csv", show_default=True)
def bench_flyweight(patients: int, plans: int, baseline_only: bool, csv_path: str):
    """Plan storage with interning vs per-patient copies."""
    from .bench import format_table, run_flyweight_bench, write_csv

    rows = []
    if not baseline_only:
        rows.append(run_flyweight_bench(patients, plans, use_flyweight=True))
    rows.append(run_flyweight_bench(patients, plans, use_flyweight=False))
    if len(rows) == 2:
        rows[0]["bytesRatio"] = rows[1]["planBytes"] // max(1, rows[0]["planBytes"])
        rows[1]["bytesRatio"] = 1
    write_csv(csv_path, rows)
    click.echo(format_table(rows))
    click.echo(f"csv written to {csv_path}")


@bench.command("pubsub")
@click.option("--providers", type=int, default=50, show_default=True)
@click.option("--blocks", type=int, default=100, show_default=True)
@click.option("--events", type=int, default=100, show_default=True)
@click.option("--polling", "polling_only", is_flag=True, help="Run only the polling baseline.")
@click.option("--csv", "csv_path", type=click.Path(), default="bench_pubsub.csv", show_default=True)
def bench_pubsub(providers: int, blocks: int, events: int, polling_only: bool, csv_path: str):
    """Dispatch work vs polling scans over the same mined chain."""
    from .bench import format_table, run_pubsub_bench, write_csv

    row = run_pubsub_bench(providers, blocks, events, mode="polling" if polling_only else "both")
    write_csv(csv_path, [row])
    click.echo(format_table([row]))
    if row["ratio"] is not None:
        click.echo(f"polling does {row['ratio']}x the work of subscription dispatch on this fixture")
    click.echo(f"csv written to {csv_path}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except ValidationFailure as exc:
        click.echo(f"validation failed: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - single exit funnel, code 3
        click.echo(f"error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
