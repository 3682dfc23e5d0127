#!/usr/bin/env python3
"""
Simple client for the CVQE scan service.

Usage:
    python client.py --submit configs/ntau_sweep_q8.toml --output-path ./runs/ntau_sweep_q8
    python client.py --job-id 123  # Check job status
    python client.py --list-jobs   # List all jobs
    python client.py --oracle configs/ntau_sweep_q8.toml
"""

import argparse
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Optional

import httpx

STATUS_EMOJI = {
    "pending": "⏳",
    "running": "🔄",
    "completed": "✅",
    "failed": "❌",
    "cancelled": "🚫"
}


class ScanClient:
    """Client for interacting with the scan service."""

    def __init__(self, base_url: str = "http://localhost:8000", transport: Optional[httpx.BaseTransport] = None):
        self.base_url = base_url.rstrip('/')
        self.username = os.getenv('USER', 'unknown')
        self.http = httpx.Client(
            base_url=self.base_url,
            headers={'X-Username': self.username},
            timeout=30,
            transport=transport
        )

    def _request(self, method: str, path: str, **kwargs) -> dict:
        try:
            response = self.http.request(method, path, **kwargs)
            response.raise_for_status()
            return response.json()
        except httpx.HTTPStatusError as e:
            print(f"\n❌ Error: {e}")
            if e.response.text:
                print(f"Details: {e.response.text}")
            sys.exit(1)
        except httpx.HTTPError as e:
            print(f"\n❌ Error: {e}")
            sys.exit(1)

    def submit_scan(self, config_path: str, output_path: Optional[str] = None, threads: int = 1) -> dict:
        """Submit a TOML scan config."""
        with open(config_path, "rb") as fh:
            config = tomllib.load(fh)
        payload = {"config": config, "threads": threads}
        if output_path:
            payload["output_path"] = output_path

        result = self._request("POST", "/scans", json=payload)
        print(f"\n✅ {result['message']}")
        print(f"📊 Job ID: {result['job_id']} (config {result['config_hash']})")
        print(f"\nCheck status with: python client.py --job-id {result['job_id']}")
        return result

    def get_job_status(self, job_id: int) -> dict:
        job = self._request("GET", f"/scans/{job_id}")
        model = job['config']['model']
        print(f"\n{STATUS_EMOJI.get(job['status'], '📊')} Job {job['id']} - {job['status'].upper()}")
        print(f"Model: Q={model['Q']} Ne={model['Ne']} V={model.get('V')}")
        print(f"Config hash: {job['config_hash']}")
        print(f"Output: {job['output_path']}")
        print(f"Created: {job['created_at']} by {job['created_by']}")
        if job['started_at']:
            print(f"Started: {job['started_at']}")
        if job['completed_at']:
            print(f"Completed: {job['completed_at']}")
        if job['rows_written'] is not None:
            print(f"Rows: {job['rows_written']}, best E_B: {job['best_energy']}")
        if job['error_message']:
            print(f"Error: {job['error_message']}")
        return job

    def list_jobs(self, limit: int = 20, config_hash: Optional[str] = None) -> list:
        params = {"limit": limit}
        if config_hash:
            params["config_hash"] = config_hash
        result = self._request("GET", "/scans", params=params)
        jobs = result['jobs']
        if not jobs:
            print("\nNo jobs found.")
            return []

        print(f"\n📋 Recent Jobs (showing {len(jobs)} of {result['total']})")
        print("-" * 80)
        for job in jobs:
            model = job['config']['model']
            print(f"{STATUS_EMOJI.get(job['status'], '📊')} Job {job['id']} | "
                  f"{job['status']} | Q={model['Q']} Ne={model['Ne']} | {job['config_hash']} | "
                  f"by {job['created_by']}")
        print("-" * 80)
        return jobs

    def oracle(self, config_path: str) -> dict:
        with open(config_path, "rb") as fh:
            config = tomllib.load(fh)
        payload = dict(config["model"])
        t_hartree = config.get("units", {}).get("t_hartree")
        if t_hartree:
            payload["t_hartree"] = t_hartree
        result = self._request("POST", "/oracle", json=payload)
        print(f"\nE_exact = {result['energy']} t ({result['method']})")
        if result.get('energy_hartree') is not None:
            print(f"        = {result['energy_hartree']} Ha")
        return result


def main():
    parser = argparse.ArgumentParser(
        description="Client for the CVQE scan service",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Submit a scan
  %(prog)s --submit configs/ntau_sweep_q8.toml --output-path ./runs/ntau_sweep_q8

  # Check job status
  %(prog)s --job-id 123

  # List recent jobs
  %(prog)s --list-jobs

  # Reference energy for a config's model
  %(prog)s --oracle configs/ntau_sweep_q8.toml
        """
    )

    parser.add_argument(
        "--url",
        type=str,
        default="http://localhost:8000",
        help="API base URL (default: http://localhost:8000)"
    )

    parser.add_argument("--submit", type=str, metavar="CONFIG", help="TOML scan config to submit")
    parser.add_argument("--output-path", type=str, help="Custom output path")
    parser.add_argument("--threads", type=int, default=1, help="Worker threads for the scan (default: 1)")

    parser.add_argument("--job-id", type=int, help="Get status of specific job ID")
    parser.add_argument("--list-jobs", action="store_true", help="List recent jobs")
    parser.add_argument("--limit", type=int, default=20, help="Number of jobs to list (default: 20)")
    parser.add_argument("--config-hash", type=str, help="Only list scans of this config hash")
    parser.add_argument("--oracle", type=str, metavar="CONFIG", help="Exact reference energy for a config")

    args = parser.parse_args()

    client = ScanClient(base_url=args.url)

    if args.job_id:
        client.get_job_status(args.job_id)
    elif args.list_jobs:
        client.list_jobs(limit=args.limit, config_hash=args.config_hash)
    elif args.oracle:
        client.oracle(args.oracle)
    elif args.submit:
        client.submit_scan(args.submit, output_path=args.output_path, threads=args.threads)
    else:
        parser.print_help()
        sys.exit(1)


if __name__ == "__main__":
    main()
