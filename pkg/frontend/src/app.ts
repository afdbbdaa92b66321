// Console controller: login, state tabs, paged table, reconstruction
// detail, approve/reject, settlement, CSV download. Server responses are
// the only source of displayed states; while a decision is in flight the
// row is visually pending but its state text is untouched until the API
// answers, and on failure the row snaps back with an inline message.

import { ApiClient, ApiError } from "./api.js";
import { ConsoleSession, STATE_TABS, StateTab, TAB_LABELS } from "./session.js";
import { PAGE_SIZE, pageCount, rowCells, showingCaption } from "./table.js";
import type { Batch, ReconstructionDetail, TransactionPage } from "./types.js";

const POLL_INTERVAL_MS = 5000;

export interface AppOptions {
  pollIntervalMs?: number;
  createObjectUrl?: (blob: Blob) => string;
}

export class ConsoleApp {
  session: ConsoleSession | null = null;
  currentPage: TransactionPage | null = null;
  detailTxnId: number | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private readonly pollIntervalMs: number;
  private readonly toObjectUrl: (blob: Blob) => string;

  constructor(
    private readonly root: HTMLElement,
    readonly api: ApiClient,
    options: AppOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? POLL_INTERVAL_MS;
    this.toObjectUrl = options.createObjectUrl ?? ((blob) => URL.createObjectURL(blob));
    api.onUnauthorized = () => this.showLogin("Session expired, please sign in again.");
    this.showLogin();
  }

  // -- views ---------------------------------------------------------------

  showLogin(message = ""): void {
    this.stopPolling();
    this.session = null;
    this.api.setToken(null);
    this.root.innerHTML = `
      <div id="login-view" class="login">
        <h1>Point of Service</h1>
        <p id="login-message" class="message">${escapeHtml(message)}</p>
        <form id="login-form">
          <label>Client id <input id="login-client" name="client" /></label>
          <label>Secret <input id="login-secret" name="secret" type="password" /></label>
          <button type="submit">Sign in</button>
        </form>
      </div>`;
    const form = this.root.querySelector<HTMLFormElement>("#login-form")!;
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const client = this.root.querySelector<HTMLInputElement>("#login-client")!.value;
      const secret = this.root.querySelector<HTMLInputElement>("#login-secret")!.value;
      void this.login(client, secret);
    });
  }

  async login(clientId: string, clientSecret: string): Promise<void> {
    try {
      const token = await this.api.login(clientId, clientSecret);
      this.session = new ConsoleSession(token.access_token, token.role, clientId);
      this.renderShell();
      await this.refresh();
      this.startPolling();
    } catch (error) {
      this.showLogin(error instanceof ApiError ? `Sign-in failed: ${error.message}` : "Sign-in failed.");
    }
  }

  private renderShell(): void {
    const session = this.session!;
    const tabs = STATE_TABS.map(
      (tab) =>
        `<button class="tab" data-tab="${tab}" role="tab">${TAB_LABELS[tab]}</button>`,
    ).join("");
    this.root.innerHTML = `
      <div id="console-view">
        <header>
          <h1>Transactions</h1>
          <span id="whoami">${escapeHtml(session.clientId)} (${session.role})</span>
        </header>
        <nav id="tabs" role="tablist">${tabs}</nav>
        <div class="table-meta">
          <span id="page-size-label">Show ${PAGE_SIZE} entries</span>
          <span>Download: <a id="csv-link" href="#" download="transactions.csv">CSV</a></span>
        </div>
        <p id="inline-error" class="error" hidden></p>
        <table id="txn-table">
          <thead>
            <tr><th>Id</th><th>Seller</th><th>Buyer</th><th>Timestamp</th><th>Amount</th><th></th></tr>
          </thead>
          <tbody></tbody>
        </table>
        <p id="empty-state" hidden>No transactions in this state.</p>
        <footer class="pager">
          <span id="showing-caption"></span>
          <button id="page-first">First</button>
          <button id="page-prev">Previous</button>
          <span id="page-current">1</span>
          <button id="page-next">Next</button>
          <button id="page-last">Last</button>
        </footer>
        <section id="detail-view" hidden></section>
      </div>`;
    this.root.querySelectorAll<HTMLButtonElement>(".tab").forEach((button) => {
      button.addEventListener("click", () => {
        this.session!.selectTab(button.dataset.tab as StateTab);
        void this.refresh();
      });
    });
    this.bindPager();
    this.root
      .querySelector<HTMLAnchorElement>("#csv-link")!
      .addEventListener("click", (event) => {
        event.preventDefault();
        void this.downloadCsv();
      });
    this.highlightTab();
  }

  private bindPager(): void {
    const go = (page: number) => {
      this.session!.page = page;
      void this.refresh();
    };
    const total = () => pageCount(this.currentPage?.total ?? 0, PAGE_SIZE);
    this.byId("page-first").addEventListener("click", () => go(1));
    this.byId("page-prev").addEventListener("click", () => go(Math.max(1, this.session!.page - 1)));
    this.byId("page-next").addEventListener("click", () => go(Math.min(total(), this.session!.page + 1)));
    this.byId("page-last").addEventListener("click", () => go(total()));
  }

  private highlightTab(): void {
    this.root.querySelectorAll<HTMLButtonElement>(".tab").forEach((button) => {
      button.classList.toggle("active", button.dataset.tab === this.session?.activeTab);
    });
  }

  // -- table ------------------------------------------------------------------

  async refresh(): Promise<void> {
    if (!this.session) {
      return;
    }
    try {
      const page = await this.api.listTransactions(this.session.activeTab, this.session.page);
      this.currentPage = page;
      this.renderTable(page);
    } catch (error) {
      if (!(error instanceof ApiError && error.status === 401)) {
        this.showError(error);
      }
    }
  }

  private renderTable(page: TransactionPage): void {
    this.highlightTab();
    const tbody = this.root.querySelector<HTMLTableSectionElement>("#txn-table tbody")!;
    tbody.innerHTML = "";
    for (const txn of page.items) {
      const cells = rowCells(txn);
      const row = document.createElement("tr");
      row.dataset.txnId = String(txn.id);
      row.dataset.state = txn.state;
      row.innerHTML = `
        <td class="cell-id">${cells.id}</td>
        <td>${escapeHtml(cells.seller)}</td>
        <td>${escapeHtml(cells.buyer)}</td>
        <td>${cells.timestamp}</td>
        <td class="cell-amount">${cells.amount}</td>
        <td><button class="btn-detail" data-txn-id="${txn.id}">Details</button></td>`;
      tbody.appendChild(row);
    }
    tbody.querySelectorAll<HTMLButtonElement>(".btn-detail").forEach((button) => {
      button.addEventListener("click", () => void this.openDetail(Number(button.dataset.txnId)));
    });
    this.byId("empty-state").hidden = page.items.length > 0;
    this.byId("showing-caption").textContent = showingCaption(
      page.page,
      page.pageSize,
      page.total,
    );
    this.byId("page-current").textContent = String(page.page);
  }

  // -- detail -----------------------------------------------------------------------

  async openDetail(txnId: number): Promise<void> {
    if (!this.session) {
      return;
    }
    this.detailTxnId = txnId;
    const panel = this.byId("detail-view");
    panel.hidden = false;
    const txn = await this.api.getTransaction(txnId);
    const decideButtons =
      this.session.canDecide && txn.state === "ToApprove"
        ? `<div class="decide">
             <input id="decision-note" placeholder="note" />
             <button class="btn-approve" data-txn-id="${txn.id}">Approve</button>
             <button class="btn-reject" data-txn-id="${txn.id}">Reject</button>
           </div>`
        : "";
    panel.innerHTML = `
      <h2>Transaction ${txn.id} <span id="detail-state">${txn.state}</span></h2>
      <p>${escapeHtml(txn.seller)} &rarr; ${escapeHtml(txn.buyer)},
         ${txn.amount} ${escapeHtml(txn.currency)} (${escapeHtml(txn.businessModel)})</p>
      ${txn.note ? `<p id="detail-note">Note: ${escapeHtml(txn.note)}</p>` : ""}
      <div id="banner-slot"></div>
      <div id="images"></div>
      ${decideButtons}
      <div id="batch-slot"></div>`;
    panel.querySelector(".btn-approve")?.addEventListener("click", () => {
      const note = panel.querySelector<HTMLInputElement>("#decision-note")!.value;
      void this.decide(txnId, "Approve", note);
    });
    panel.querySelector(".btn-reject")?.addEventListener("click", () => {
      const note = panel.querySelector<HTMLInputElement>("#decision-note")!.value;
      void this.decide(txnId, "Reject", note);
    });

    if (!this.session.canDecide) {
      return; // reconstruction detail is an Admin view
    }
    if (txn.state === "Incomplete") {
      this.byId("banner-slot").innerHTML =
        `<p id="incomplete-placeholder">Awaiting second share.</p>`;
      return;
    }
    try {
      const detail = await this.api.reconstruction(txnId);
      await this.renderReconstruction(txnId, detail);
    } catch (error) {
      this.byId("banner-slot").innerHTML =
        `<p id="missing-record">No reconstruction record: ${escapeHtml(messageOf(error))}</p>`;
    }
  }

  private async renderReconstruction(txnId: number, detail: ReconstructionDetail): Promise<void> {
    const record = detail.record;
    if (record && record.outcome !== "Ok") {
      this.byId("banner-slot").innerHTML =
        `<p id="tamper-banner" class="banner">${record.outcome}: reconstruction failed, transaction Rejected.</p>`;
    } else if (record && record.captchaWindow === "Expired") {
      this.byId("banner-slot").innerHTML =
        `<p id="expired-banner" class="banner">Capture window expired.</p>`;
    }
    const images = this.byId("images");
    const wanted: Array<[string, string, boolean]> = [
      ["share1", "Seller share", true],
      ["share2", "Buyer share", true],
      ["stacked", "Stacked", false],
      ["decoded", "Decoded", false],
    ];
    for (const [kind, label, isShare] of wanted) {
      if ((kind === "decoded" && !detail.decodedPbm) || (kind === "stacked" && !detail.stackedPbm)) {
        continue;
      }
      try {
        const blob = await this.api.fetchImage(txnId, kind as never);
        const figure = document.createElement("figure");
        // shares are twice the secret's width; show them at half horizontal
        // scale so proportions match the reconstruction
        figure.innerHTML = `
          <img class="${isShare ? "image-share" : "image-full"}" id="img-${kind}"
               src="${this.toObjectUrl(blob)}" alt="${label}" />
          <figcaption>${label}</figcaption>`;
        images.appendChild(figure);
      } catch {
        // missing image (e.g. no decode for tampered stacks) is fine
      }
    }
  }

  // -- decisions ---------------------------------------------------------------------

  async decide(txnId: number, decision: "Approve" | "Reject", note: string): Promise<void> {
    const panel = this.byId("detail-view");
    const buttons = panel.querySelectorAll<HTMLButtonElement>(".btn-approve, .btn-reject");
    buttons.forEach((button) => (button.disabled = true));
    const state = this.byId("detail-state");
    const previous = state.textContent ?? "";
    state.classList.add("pending");
    this.hideError();
    try {
      const result =
        decision === "Approve"
          ? await this.api.approve(txnId, note)
          : await this.api.reject(txnId, note);
      state.classList.remove("pending");
      state.textContent = result.transaction.state;
      if (result.batch) {
        this.renderBatch(result.batch);
      }
      await this.refresh();
    } catch (error) {
      // revert: the API refused, so the row keeps its confirmed state
      state.classList.remove("pending");
      state.textContent = previous;
      buttons.forEach((button) => (button.disabled = false));
      this.showError(error, error instanceof ApiError && error.code === "illegal_transition"
        ? "Someone else already decided this transaction."
        : undefined);
      await this.refresh();
    }
  }

  private renderBatch(batch: Batch): void {
    const slot = this.byId("batch-slot");
    const settle =
      batch.state === "Triggered" && this.session?.canDecide
        ? `<button id="btn-settle" data-batch-id="${batch.id}">Settle batch</button>`
        : "";
    slot.innerHTML = `
      <p id="batch-info">Batch ${batch.id}: ${batch.state}, total ${batch.totalAmount}
         (threshold ${batch.thresholdAtCreation})</p>${settle}`;
    slot.querySelector("#btn-settle")?.addEventListener("click", () => {
      void this.settle(batch.id);
    });
  }

  async settle(batchId: number): Promise<void> {
    try {
      const batch = await this.api.settleBatch(batchId);
      this.renderBatch(batch);
      await this.refresh();
    } catch (error) {
      this.showError(error);
    }
  }

  // -- csv, polling, misc -----------------------------------------------------------------

  async downloadCsv(): Promise<void> {
    if (!this.session) {
      return;
    }
    try {
      const blob = await this.api.fetchCsv(this.session.activeTab);
      const link = this.root.querySelector<HTMLAnchorElement>("#csv-link")!;
      link.href = this.toObjectUrl(blob);
    } catch (error) {
      this.showError(error);
    }
  }

  startPolling(): void {
    if (this.pollIntervalMs > 0 && this.pollTimer === null) {
      this.pollTimer = setInterval(() => void this.refresh(), this.pollIntervalMs);
    }
  }

  stopPolling(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }

  private showError(error: unknown, friendly?: string): void {
    const banner = this.root.querySelector<HTMLElement>("#inline-error");
    if (banner) {
      banner.hidden = false;
      banner.textContent = friendly ?? messageOf(error);
    }
  }

  private hideError(): void {
    const banner = this.root.querySelector<HTMLElement>("#inline-error");
    if (banner) {
      banner.hidden = true;
      banner.textContent = "";
    }
  }

  private byId(id: string): HTMLElement {
    return this.root.querySelector<HTMLElement>(`#${id}`)!;
  }
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function messageOf(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}
