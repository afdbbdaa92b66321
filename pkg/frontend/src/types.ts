// API models mirrored from the bank's JSON responses.

export type TransactionState =
  | "Created"
  | "ShareExchanged"
  | "Incomplete"
  | "ToApprove"
  | "Accepted"
  | "Rejected"
  | "Queued"
  | "Settled"
  | "Declined";

export interface Transaction {
  id: number;
  seller: string;
  buyer: string;
  amount: number;
  currency: string;
  businessModel: string;
  state: TransactionState;
  createdAt: string;
  updatedAt: string;
  captchaNonce: string;
  note: string;
  externalRef?: string;
  tamperEvidence?: boolean;
  rejectReason?: string;
}

export interface TransactionPage {
  items: Transaction[];
  page: number;
  pageSize: number;
  total: number;
}

export interface Batch {
  id: number;
  seller: string;
  buyer: string;
  transactionIds: number[];
  totalAmount: number;
  thresholdAtCreation: number;
  state: "Open" | "Triggered" | "Settled" | "Declined";
  transferReference: string;
}

export interface ReconstructionRecord {
  transactionId: number;
  stackedImagePath: string;
  decodedImagePath: string;
  blockWeightHistogram: Record<string, number>;
  outcome: "Ok" | "TamperDetected" | "DimensionMismatch";
  captchaWindow: "WithinWindow" | "Expired";
}

export interface ReconstructionDetail {
  transactionId: number;
  record: ReconstructionRecord | null;
  shareSeller: string | null;
  shareBuyer: string | null;
  stackedPbm: string | null;
  decodedPbm: string | null;
}

export interface TokenResponse {
  access_token: string;
  token_type: string;
  expires_in: number;
  role: "Admin" | "User";
}

export interface Problem {
  type: string;
  title: string;
  status: number;
  code: string;
  detail: string;
}

export type ImageKind = "share1" | "share2" | "stacked" | "decoded";
