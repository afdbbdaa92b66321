// Console session: bearer token, role and the active state tab. Admin-only
// controls are gated on `canDecide`, mirroring (never exceeding) the API's
// own authorization.

export const STATE_TABS = ["All", "ToApprove", "Rejected", "Accepted", "Incomplete"] as const;
export type StateTab = (typeof STATE_TABS)[number];

export const TAB_LABELS: Record<StateTab, string> = {
  All: "All",
  ToApprove: "To Approve",
  Rejected: "Rejected",
  Accepted: "Accepted",
  Incomplete: "Incomplete",
};

export class ConsoleSession {
  activeTab: StateTab = "All";
  page = 1;

  constructor(
    readonly token: string,
    readonly role: "Admin" | "User",
    readonly clientId: string,
  ) {}

  get canDecide(): boolean {
    return this.role === "Admin";
  }

  selectTab(tab: StateTab): void {
    this.activeTab = tab;
    this.page = 1;
  }
}
