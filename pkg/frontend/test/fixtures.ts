// Shared fixtures and a scriptable fetch for exercising the console
// against canned bank responses.

import type { FetchLike } from "../src/api.js";
import type { ReconstructionDetail, Transaction, TransactionPage } from "../src/types.js";

export const PROTOTYPE_ROW: Transaction = {
  id: 1,
  seller: "seller2@alphaplus.com",
  buyer: "buyer1@alphaplus.com",
  amount: 0,
  currency: "XOF",
  businessModel: "carry-then-cash",
  state: "Incomplete",
  createdAt: "2016-09-08T11:02:45Z",
  updatedAt: "2016-09-08T11:02:45Z",
  captchaNonce: "",
  note: "",
};

export function transaction(overrides: Partial<Transaction> = {}): Transaction {
  return { ...PROTOTYPE_ROW, id: 7, state: "ToApprove", amount: 500, ...overrides };
}

export function page(items: Transaction[], total = items.length, pageNum = 1): TransactionPage {
  return { items, page: pageNum, pageSize: 10, total };
}

export function okRecord(txnId: number): ReconstructionDetail {
  return {
    transactionId: txnId,
    record: {
      transactionId: txnId,
      stackedImagePath: "stacked.pbm",
      decodedImagePath: "decoded.pbm",
      blockWeightHistogram: { "0": 0, "1": 120, "2": 136 },
      outcome: "Ok",
      captchaWindow: "WithinWindow",
    },
    shareSeller: "UDQ=",
    shareBuyer: "UDQ=",
    stackedPbm: "UDQ=",
    decodedPbm: "UDQ=",
  };
}

export interface Route {
  method: string;
  path: RegExp;
  reply: (match: RegExpMatchArray, init?: RequestInit) => unknown;
  status?: number | ((match: RegExpMatchArray) => number);
  contentType?: string;
}

export class FakeBank {
  readonly calls: Array<{ method: string; path: string; body: unknown }> = [];

  constructor(private routes: Route[]) {}

  prepend(route: Route): void {
    this.routes = [route, ...this.routes];
  }

  fetch: FetchLike = async (input, init) => {
    const url = new URL(input);
    const pathWithQuery = url.pathname + url.search;
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.calls.push({ method, path: pathWithQuery, body });
    for (const route of this.routes) {
      const match = pathWithQuery.match(route.path);
      if (match && route.method === method) {
        const status =
          typeof route.status === "function" ? route.status(match) : route.status ?? 200;
        const payload = route.reply(match, init);
        if (route.contentType === "image/png" || route.contentType === "text/csv") {
          return new Response(payload as BodyInit, {
            status,
            headers: { "Content-Type": route.contentType },
          });
        }
        return new Response(JSON.stringify(payload), {
          status,
          headers: { "Content-Type": "application/json" },
        });
      }
    }
    return new Response(
      JSON.stringify({
        type: "about:blank",
        title: "not found",
        status: 404,
        code: "not_found",
        detail: `no route for ${method} ${pathWithQuery}`,
      }),
      { status: 404, headers: { "Content-Type": "application/json" } },
    );
  };
}

export function problem(status: number, code: string, detail = ""): Route["reply"] {
  return () => ({ type: "about:blank", title: code, status, code, detail });
}

export function tokenRoute(role: "Admin" | "User" = "Admin"): Route {
  return {
    method: "POST",
    path: /^\/token$/,
    reply: () => ({
      access_token: "test-token",
      token_type: "bearer",
      expires_in: 3600,
      role,
    }),
  };
}

export function pngRoute(): Route {
  return {
    method: "GET",
    path: /^\/transactions\/(\d+)\/reconstruction\?which=\w+$/,
    contentType: "image/png",
    reply: () => new Blob([new Uint8Array([0x89, 0x50, 0x4e, 0x47])]),
  };
}
