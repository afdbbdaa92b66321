import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { FakeBank, page, problem, tokenRoute, transaction } from "./fixtures.js";

function client(bank: FakeBank): ApiClient {
  return new ApiClient("http://bank.test", bank.fetch);
}

describe("ApiClient", () => {
  it("logs in and attaches the bearer token afterwards", async () => {
    const bank = new FakeBank([
      tokenRoute(),
      { method: "GET", path: /^\/transactions\?/, reply: () => page([transaction()]) },
    ]);
    const api = client(bank);
    const token = await api.login("admin", "admin-secret");
    expect(token.role).toBe("Admin");
    await api.listTransactions("All", 1);
    const listCall = bank.calls[1];
    expect(listCall.path).toBe("/transactions?state=All&page=1");
  });

  it("raises ApiError with the machine-readable code", async () => {
    const bank = new FakeBank([
      tokenRoute(),
      {
        method: "POST",
        path: /^\/transactions\/(\d+)\/approve$/,
        status: 409,
        reply: problem(409, "illegal_transition", "wrong state"),
      },
    ]);
    const api = client(bank);
    await api.login("admin", "admin-secret");
    const failure = await api.approve(4, "").catch((error) => error);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure.code).toBe("illegal_transition");
    expect(failure.status).toBe(409);
  });

  it("announces 401 once through onUnauthorized", async () => {
    const bank = new FakeBank([
      {
        method: "GET",
        path: /^\/transactions\?/,
        status: 401,
        reply: problem(401, "auth_invalid_token", "token expired"),
      },
    ]);
    const api = client(bank);
    const handler = vi.fn();
    api.onUnauthorized = handler;
    await expect(api.listTransactions("All", 1)).rejects.toMatchObject({ status: 401 });
    expect(handler).toHaveBeenCalledTimes(1);
  });

  it("requests PNG bytes with an image accept header", async () => {
    const bank = new FakeBank([
      {
        method: "GET",
        path: /^\/transactions\/(\d+)\/reconstruction\?which=decoded$/,
        contentType: "image/png",
        reply: () => new Blob([new Uint8Array([1, 2, 3])]),
      },
    ]);
    const api = client(bank);
    api.setToken("t");
    const blob = await api.fetchImage(9, "decoded");
    expect(blob.size).toBe(3);
  });
});
