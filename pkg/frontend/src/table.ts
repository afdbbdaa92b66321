// Pure presentation helpers for the transaction table; kept DOM-free so
// pagination and formatting are unit-testable in isolation.

import type { Transaction } from "./types.js";

export const PAGE_SIZE = 10;

export interface RowCells {
  id: string;
  seller: string;
  buyer: string;
  timestamp: string;
  amount: string;
}

/** One decimal place, matching the CSV export (500 -> "500.0"). */
export function formatAmount(amount: number): string {
  return amount.toFixed(1);
}

export function rowCells(txn: Transaction): RowCells {
  return {
    id: String(txn.id),
    seller: txn.seller,
    buyer: txn.buyer,
    timestamp: txn.createdAt,
    amount: formatAmount(txn.amount),
  };
}

export function pageCount(total: number, pageSize = PAGE_SIZE): number {
  return Math.max(1, Math.ceil(total / pageSize));
}

/** "Showing 1 to 1 of 1 entries" style caption. */
export function showingCaption(page: number, pageSize: number, total: number): string {
  if (total === 0) {
    return "Showing 0 to 0 of 0 entries";
  }
  const first = (page - 1) * pageSize + 1;
  const last = Math.min(page * pageSize, total);
  return `Showing ${first} to ${last} of ${total} entries`;
}

export function rowsOnPage(page: number, pageSize: number, total: number): number {
  if (total === 0) {
    return 0;
  }
  const last = Math.min(page * pageSize, total);
  return Math.max(0, last - (page - 1) * pageSize);
}
