#!/usr/bin/env python3
"""
Identity Workbench MCP Server

A Model Context Protocol server exposing the identity catalog, verification,
product recognition and constant-term replay as tools.
"""
import json
import logging
import sys
from typing import Optional

from mcp.server.fastmcp import FastMCP
from mcp.server.fastmcp.exceptions import ToolError

from catalog import Catalog, IdentityRecord, load_catalog, replay_proofs, verify
from errors import QSeriesError
from search import recognize_series
from settings import Settings, configure_logging

logger = logging.getLogger(__name__)

# Create the MCP server instance
mcp = FastMCP("Identity Workbench")


class IdentityWorkbench:
    """
    Identity workbench MCP server implementation
    """
    def __init__(self, settings: Optional[Settings] = None, catalog: Optional[Catalog] = None):
        self.settings = settings or Settings()
        self.catalog = catalog if catalog is not None else load_catalog(self.settings.CATALOG_PATH)
        logger.info(f"Workbench ready with {len(self.catalog)} records")

    def _record(self, identity_id: str) -> IdentityRecord:
        return self.catalog.lookup(identity_id)

    def _list_identities_impl(self, status: Optional[str] = None, substring: Optional[str] = None) -> str:
        records = self.catalog.select(status=status, substring=substring)
        return json.dumps({
            "count": len(records),
            "identities": [{
                "id": r.id,
                "status": r.status,
                "aliases": list(r.aliases),
                "rhs": None if r.rhs is None else r.rhs.to_text(),
            } for r in records],
        })

    def _verify_identity_impl(self, identity_id: str, order: Optional[int] = None,
                              param_degree: Optional[int] = None) -> str:
        record = self._record(identity_id)
        report = verify(record, order or self.settings.ORDER,
                        self.settings.PARAM_DEGREE if param_degree is None else param_degree)
        return json.dumps(report.model_dump())

    def _evaluate_sum_side_impl(self, identity_id: str, order: Optional[int] = None) -> str:
        record = self._record(identity_id)
        order = order or self.settings.ORDER
        series = record.eval_lhs(order, self.settings.PARAM_DEGREE)
        return json.dumps({"id": record.id, "order": order, "series": series.to_text()})

    def _recognize_product_impl(self, identity_id: str, order: Optional[int] = None,
                                max_period: Optional[int] = None) -> str:
        record = self._record(identity_id)
        order = order or self.settings.ORDER
        max_period = max_period or self.settings.MAX_PERIOD
        series = record.eval_lhs(order, self.settings.PARAM_DEGREE)
        rp, rhs = recognize_series(series, order, max_period)
        if rp is None:
            raise ToolError(f"{record.id}: the sum side has no rational leading coefficient")
        return json.dumps({
            "id": record.id,
            "order": order,
            "shift": str(rp.shift),
            "exponents": list(rp.exponents),
            "period": rp.period,
            "product": None if rhs is None else rhs.to_text(),
        })

    def _run_proof_script_impl(self, identity_id: str, order: Optional[int] = None) -> str:
        record = self._record(identity_id)
        if not record.proofs:
            raise ToolError(f"{record.id} has no constant-term script")
        order = order or self.settings.ORDER
        reports = replay_proofs(record, order)
        return json.dumps({"id": record.id, "passed": all(r.passed for r in reports),
                           "reports": [r.model_dump() for r in reports]})

    @staticmethod
    def _registered() -> "IdentityWorkbench":
        instance = getattr(mcp, "_instance", None)
        if instance is None:
            raise ToolError("Workbench instance not initialized")
        return instance

    @staticmethod
    def _call(name: str, func, *args, **kwargs) -> str:
        try:
            return func(*args, **kwargs)
        except ToolError as e:
            logger.error(f"Error in {name}: {e}")
            raise
        except QSeriesError as e:
            logger.error(f"Error in {name}: {type(e).__name__}: {e}")
            raise ToolError(f"{type(e).__name__}: {e}")

    @staticmethod
    @mcp.tool(
        name="list_identities",
        description="List catalog identities, optionally filtered by status or by a substring of their labels"
    )
    async def list_identities(status: Optional[str] = None, substring: Optional[str] = None) -> str:
        """List catalog identities"""
        instance = IdentityWorkbench._registered()
        return IdentityWorkbench._call("list_identities", instance._list_identities_impl, status, substring)

    @staticmethod
    @mcp.tool(
        name="verify_identity",
        description="Compare both sides of a catalog identity to the given order"
    )
    async def verify_identity(id: str, order: Optional[int] = None, param_degree: Optional[int] = None) -> str:
        """Verify one identity"""
        instance = IdentityWorkbench._registered()
        return IdentityWorkbench._call("verify_identity", instance._verify_identity_impl, id, order, param_degree)

    @staticmethod
    @mcp.tool(
        name="evaluate_sum_side",
        description="Expand the sum side of a catalog identity as a truncated q-series"
    )
    async def evaluate_sum_side(id: str, order: Optional[int] = None) -> str:
        """Expand a sum side"""
        instance = IdentityWorkbench._registered()
        return IdentityWorkbench._call("evaluate_sum_side", instance._evaluate_sum_side_impl, id, order)

    @staticmethod
    @mcp.tool(
        name="recognize_product",
        description="Recover the infinite-product form of a catalog identity's sum side"
    )
    async def recognize_product(id: str, order: Optional[int] = None, max_period: Optional[int] = None) -> str:
        """Recognize a sum side as a product"""
        instance = IdentityWorkbench._registered()
        return IdentityWorkbench._call("recognize_product", instance._recognize_product_impl, id, order, max_period)

    @staticmethod
    @mcp.tool(
        name="run_proof_script",
        description="Replay the constant-term scripts attached to a catalog identity"
    )
    async def run_proof_script(id: str, order: Optional[int] = None) -> str:
        """Replay constant-term scripts"""
        instance = IdentityWorkbench._registered()
        return IdentityWorkbench._call("run_proof_script", instance._run_proof_script_impl, id, order)


def serve(settings: Settings, catalog: Optional[Catalog] = None) -> None:
    """Register a workbench and run the server on stdio."""
    server = IdentityWorkbench(settings, catalog)
    mcp._instance = server
    logger.info("Starting Identity Workbench MCP Server")
    mcp.run(transport="stdio")


def main():
    """Main entry point"""
    settings = Settings()
    configure_logging(settings.LOG_LEVEL)
    try:
        serve(settings)
    except QSeriesError as e:
        logger.error(f"Failed to start server: {e}")
        sys.exit(2)


if __name__ == "__main__":
    main()
