/** Typed client for the review service; all mutation is idempotent POSTs. */

import { Decision, DecisionResult, PairPage, ReviewContext, Stats } from "./types.js";

export class ApiError extends Error {
  status: number;
  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

export class ReviewApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as T;
  }

  listPending(page = 1, pageSize = 20): Promise<PairPage> {
    return this.get(`/pairs?status=pending&page=${page}&page_size=${pageSize}`);
  }

  getPair(pairId: string): Promise<ReviewContext> {
    return this.get(`/pairs/${encodeURIComponent(pairId)}`);
  }

  stats(): Promise<Stats> {
    return this.get("/stats");
  }

  mediaUrl(scenarioId: string, step: number): string {
    return `${this.baseUrl}/media/${encodeURIComponent(scenarioId)}/${step}`;
  }

  async decide(
    pairId: string,
    decision: Decision,
    opts: { editedText?: string; idempotencyKey?: string; reviewer?: string } = {},
  ): Promise<DecisionResult> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/pairs/${encodeURIComponent(pairId)}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          decision,
          edited_text: opts.editedText ?? null,
          idempotency_key: opts.idempotencyKey ?? null,
          reviewer: opts.reviewer ?? null,
        }),
      },
    );
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as DecisionResult;
  }
}
