# src/utils/calibration.py
"""
Balance-sheet calibration.

Turns aggregate stress-test rows (total assets, capital, interbank
liabilities, tier 1 ratio) into stylized bank balance sheets, estimates an
interbank liabilities matrix from its marginals, and loads both from CSV.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.exceptions import InvalidParameterError
from src.models.network import FinancialNetwork
from src.models.scenario import BalanceSheetRow, BalanceSheets, RejectedRow

logger = logging.getLogger(__name__)

BALANCE_SHEET_COLUMNS = ["bank_id", "total_assets", "capital", "interbank_liabilities", "tier1_ratio"]
MATRIX_COLUMNS = ["from", "to", "amount"]

MARGINAL_TOL = 1e-6  # relative mismatch of in/out totals accepted without rescaling
IPF_TOL = 1e-9
IPF_MAX_ITERS = 10_000


# ============================================================================
# BALANCE SHEETS
# ============================================================================


def build_balance_sheets(rows: Sequence[BalanceSheetRow]) -> BalanceSheets:
    """
    Stylized balance sheets from aggregate rows.

    Non-interbank assets T - IB are split into cash c = R (T - IB) and the
    illiquid holding a = (1 - R)(T - IB); external liabilities are whatever
    is left after capital, L0 = T - IB - C, so p-bar = L0 + IB. Interbank
    assets are taken equal to interbank liabilities.

    Args:
        rows: Validated balance-sheet rows

    Returns:
        BalanceSheets with one entry per row, in row order
    """
    total = np.array([row.total_assets for row in rows], dtype=float)
    capital = np.array([row.capital for row in rows], dtype=float)
    interbank = np.array([row.interbank_liabilities for row in rows], dtype=float)
    ratio = np.array([row.tier1_ratio for row in rows], dtype=float)

    base = total - interbank
    external = base - capital
    if np.any(external < 0):
        bad = [rows[i].bank_id for i in np.flatnonzero(external < 0)]
        raise InvalidParameterError(f"negative external liabilities for banks {bad}")

    pbar = external + interbank
    net_worth = total - pbar
    if not np.allclose(net_worth, capital, rtol=1e-12, atol=1e-9):
        raise InvalidParameterError("calibrated net worth does not match reported capital")

    return BalanceSheets(
        bank_ids=[row.bank_id for row in rows],
        liquid=ratio * base,
        illiquid=(1 - ratio) * base,
        external=external,
        total_liabilities=pbar,
        interbank_out=interbank,
        interbank_in=interbank.copy(),
    )


def load_balance_sheets(path: Union[str, Path]) -> Tuple[List[BalanceSheetRow], List[RejectedRow]]:
    """
    Read `bank_id,total_assets,capital,interbank_liabilities,tier1_ratio` rows.

    Rows that fail validation are skipped and reported rather than aborting
    the load.
    """
    path = Path(path)
    logger.info(f"Loading balance sheets from {path}")
    try:
        df = pd.read_csv(path, dtype={"bank_id": str})
    except FileNotFoundError as e:
        raise InvalidParameterError(f"balance-sheet file not found: {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InvalidParameterError(f"could not parse {path}: {e}") from e

    missing = [col for col in BALANCE_SHEET_COLUMNS if col not in df.columns]
    if missing:
        raise InvalidParameterError(f"{path} is missing columns: {', '.join(missing)}")

    accepted: List[BalanceSheetRow] = []
    rejected: List[RejectedRow] = []
    seen = set()
    for index, record in enumerate(df[BALANCE_SHEET_COLUMNS].to_dict(orient="records")):
        bank_id = None if pd.isna(record["bank_id"]) else str(record["bank_id"]).strip()
        try:
            if not bank_id:
                raise InvalidParameterError("missing bank_id")
            if bank_id in seen:
                raise InvalidParameterError(f"duplicate bank_id {bank_id}")
            row = BalanceSheetRow(**{**record, "bank_id": bank_id})
        except (InvalidParameterError, ValidationError) as e:
            rejected.append(RejectedRow(row=index, bank_id=bank_id, reason=str(e)))
            continue
        seen.add(bank_id)
        accepted.append(row)

    for rejection in rejected:
        logger.warning(f"Rejected row {rejection.row} ({rejection.bank_id}): {rejection.reason}")
    logger.info(f"Accepted {len(accepted)} banks, rejected {len(rejected)}")
    return accepted, rejected


def synthetic_balance_sheets(n: int = 87, seed: int = 0) -> List[BalanceSheetRow]:
    """
    Randomly drawn balance sheets shaped like a large stress-test sample.

    Total assets are lognormal; capital, interbank liabilities and the
    tier 1 ratio are drawn as fractions of assets in typical ranges.
    """
    rng = np.random.default_rng(seed)
    total = 1e3 * rng.lognormal(mean=0.0, sigma=0.8, size=n)
    capital = total * rng.uniform(0.03, 0.08, size=n)
    interbank = total * rng.uniform(0.05, 0.20, size=n)
    ratio = rng.uniform(0.05, 0.15, size=n)
    return [
        BalanceSheetRow(
            bank_id=f"B{i + 1:03d}",
            total_assets=float(total[i]),
            capital=float(capital[i]),
            interbank_liabilities=float(interbank[i]),
            tier1_ratio=float(ratio[i]),
        )
        for i in range(n)
    ]


# ============================================================================
# LIABILITIES MATRIX
# ============================================================================


def estimate_matrix(out_totals, in_totals) -> np.ndarray:
    """
    Interbank matrix with given row (owed) and column (owned) sums and a zero diagonal.

    Starts from the gravity fill L_ij = out_i in_j / sum(in) and alternates
    row and column scaling until both marginals match to 1e-9 relative.
    In-totals are rescaled to the out-total sum when the two disagree by
    more than 1e-6 relative.

    Args:
        out_totals: Interbank liabilities per bank (row sums)
        in_totals: Interbank assets per bank (column sums)

    Returns:
        n x n matrix of estimated obligations
    """
    out = np.asarray(out_totals, dtype=float)
    inn = np.asarray(in_totals, dtype=float)
    if out.shape != inn.shape or out.ndim != 1:
        raise InvalidParameterError("in/out totals must be vectors of equal length")
    if np.any(out < 0) or np.any(inn < 0):
        raise InvalidParameterError("interbank totals must be nonnegative")

    n = out.shape[0]
    total_out, total_in = out.sum(), inn.sum()
    if n < 2 or total_out == 0 or total_in == 0:
        return np.zeros((n, n))

    if abs(total_out - total_in) > MARGINAL_TOL * max(total_out, total_in):
        logger.warning(
            f"Interbank totals disagree (out={total_out:.6g}, in={total_in:.6g}); "
            f"rescaling in-totals by {total_out / total_in:.6g}"
        )
    inn = inn * (total_out / total_in)

    matrix = np.outer(out, inn) / inn.sum()
    np.fill_diagonal(matrix, 0.0)

    for iteration in range(1, IPF_MAX_ITERS + 1):
        rows = matrix.sum(axis=1)
        matrix *= np.divide(out, rows, out=np.zeros(n), where=rows > 0)[:, None]
        cols = matrix.sum(axis=0)
        matrix *= np.divide(inn, cols, out=np.zeros(n), where=cols > 0)[None, :]

        error = max(
            np.max(np.abs(matrix.sum(axis=1) - out)),
            np.max(np.abs(matrix.sum(axis=0) - inn)),
        ) / total_out
        if error <= IPF_TOL:
            logger.debug(f"Matrix marginals matched after {iteration} scaling rounds")
            return matrix

    raise InvalidParameterError(
        f"interbank marginals cannot be matched with a zero diagonal (error {error:.3e})"
    )


def load_matrix_csv(path: Union[str, Path], n: int) -> np.ndarray:
    """
    Full liabilities matrix from `from,to,amount` rows.

    Banks are numbered 1..n in balance-sheet order; `to = 0` is the
    external sector. Repeated pairs are summed.
    """
    path = Path(path)
    try:
        df = pd.read_csv(path)
    except FileNotFoundError as e:
        raise InvalidParameterError(f"matrix file not found: {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InvalidParameterError(f"could not parse {path}: {e}") from e

    missing = [col for col in MATRIX_COLUMNS if col not in df.columns]
    if missing:
        raise InvalidParameterError(f"{path} is missing columns: {', '.join(missing)}")

    liabilities = np.zeros((n, n + 1))
    for index, record in enumerate(df[MATRIX_COLUMNS].to_dict(orient="records")):
        try:
            source, target, amount = int(record["from"]), int(record["to"]), float(record["amount"])
        except (TypeError, ValueError) as e:
            raise InvalidParameterError(f"row {index}: {e}") from e
        if not 1 <= source <= n or not 0 <= target <= n:
            raise InvalidParameterError(f"row {index}: bank index out of range 1..{n}")
        if source == target:
            raise InvalidParameterError(f"row {index}: bank {source} cannot owe itself")
        if not np.isfinite(amount) or amount < 0:
            raise InvalidParameterError(f"row {index}: amount must be a nonnegative number")
        liabilities[source - 1, target] += amount

    logger.info(f"Loaded {len(df)} obligations for {n} banks from {path}")
    return liabilities


def build_network(
    sheets: BalanceSheets,
    rates: Union[float, Sequence[float]] = 0.05,
    matrix: Optional[np.ndarray] = None,
) -> FinancialNetwork:
    """
    FinancialNetwork from calibrated sheets.

    A supplied n x (n+1) matrix replaces the estimated interbank block, and
    its external column replaces L0 when it has any nonzero entry.
    """
    n = sheets.n
    liabilities = np.zeros((n, n + 1))
    liabilities[:, 0] = sheets.external
    if matrix is None:
        liabilities[:, 1:] = estimate_matrix(sheets.interbank_out, sheets.interbank_in)
    else:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (n, n + 1):
            raise InvalidParameterError(f"matrix must be {n}x{n + 1}, got {matrix.shape}")
        liabilities[:, 1:] = matrix[:, 1:]
        if np.any(matrix[:, 0] > 0):
            liabilities[:, 0] = matrix[:, 0]

    return FinancialNetwork(
        liabilities=liabilities,
        liquid=sheets.liquid,
        illiquid=sheets.illiquid,
        rates=np.broadcast_to(np.asarray(rates, dtype=float), (n,)),
    )
