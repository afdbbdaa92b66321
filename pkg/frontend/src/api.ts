// Thin typed client for the point-of-service HTTP API. Every displayed
// state originates from one of these responses; the console never invents
// transitions locally.

import type {
  Batch,
  ImageKind,
  Problem,
  ReconstructionDetail,
  TokenResponse,
  Transaction,
  TransactionPage,
} from "./types.js";

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(problem: Problem) {
    super(problem.detail || problem.title);
    this.code = problem.code;
    this.status = problem.status;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private token: string | null = null;
  /** invoked once when the bank answers 401, e.g. expired session */
  onUnauthorized: (() => void) | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  async login(clientId: string, clientSecret: string): Promise<TokenResponse> {
    const body = await this.request<TokenResponse>("POST", "/token", {
      json: {
        grant_type: "client_credentials",
        client_id: clientId,
        client_secret: clientSecret,
      },
      skipAuth: true,
    });
    this.token = body.access_token;
    return body;
  }

  listTransactions(state: string, page: number): Promise<TransactionPage> {
    const query = new URLSearchParams({ state, page: String(page) });
    return this.request("GET", `/transactions?${query}`);
  }

  getTransaction(id: number): Promise<Transaction> {
    return this.request("GET", `/transactions/${id}`);
  }

  reconstruction(id: number): Promise<ReconstructionDetail> {
    return this.request("GET", `/transactions/${id}/reconstruction`);
  }

  approve(id: number, note: string): Promise<{ transaction: Transaction; batch: Batch | null }> {
    return this.request("POST", `/transactions/${id}/approve`, { json: { note } });
  }

  reject(id: number, note: string): Promise<{ transaction: Transaction; batch: Batch | null }> {
    return this.request("POST", `/transactions/${id}/reject`, { json: { note } });
  }

  settleBatch(batchId: number): Promise<Batch> {
    return this.request("POST", `/batches/${batchId}/settle`, { json: {} });
  }

  getBatch(batchId: number): Promise<Batch> {
    return this.request("GET", `/batches/${batchId}`);
  }

  /** PNG bytes via content negotiation; the caller turns them into an object URL. */
  async fetchImage(id: number, which: ImageKind): Promise<Blob> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/transactions/${id}/reconstruction?which=${which}`,
      { headers: { ...this.authHeader(), Accept: "image/png" } },
    );
    if (!response.ok) {
      throw await this.problemFrom(response);
    }
    return response.blob();
  }

  /** Authenticated CSV download, returned as a blob for a link object URL. */
  async fetchCsv(state: string): Promise<Blob> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/export.csv?state=${encodeURIComponent(state)}`,
      { headers: { ...this.authHeader(), Accept: "text/csv" } },
    );
    if (!response.ok) {
      throw await this.problemFrom(response);
    }
    return response.blob();
  }

  private authHeader(): Record<string, string> {
    return this.token ? { Authorization: `Bearer ${this.token}` } : {};
  }

  private async problemFrom(response: Response): Promise<ApiError> {
    let problem: Problem;
    try {
      problem = (await response.json()) as Problem;
    } catch {
      problem = {
        type: "about:blank",
        title: response.statusText,
        status: response.status,
        code: "http_error",
        detail: `HTTP ${response.status}`,
      };
    }
    const error = new ApiError(problem);
    if (error.status === 401 && this.onUnauthorized) {
      this.onUnauthorized();
    }
    return error;
  }

  private async request<T>(
    method: string,
    path: string,
    options: { json?: unknown; skipAuth?: boolean } = {},
  ): Promise<T> {
    const headers: Record<string, string> = { Accept: "application/json" };
    if (!options.skipAuth) {
      Object.assign(headers, this.authHeader());
    }
    const init: RequestInit = { method, headers };
    if (options.json !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(options.json);
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw await this.problemFrom(response);
    }
    return (await response.json()) as T;
  }
}
