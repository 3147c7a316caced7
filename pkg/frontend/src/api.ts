/** Typed client for the session REST API. The UI never computes scores. */

import type {
  AskResponsePayload,
  ExchangePayload,
  OverrideRequest,
  SessionCreatedPayload,
  SessionPayload,
  SessionSummaryPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`API error ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function parseJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSessionFromFile(file: File): Promise<SessionCreatedPayload> {
    const form = new FormData();
    form.append("image", file, file.name);
    const response = await fetch(this.url("/sessions"), { method: "POST", body: form });
    return parseJson(response);
  }

  async createSessionFromPath(imagePath: string): Promise<SessionCreatedPayload> {
    const response = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_path: imagePath }),
    });
    return parseJson(response);
  }

  async ask(sessionId: string, question: string): Promise<AskResponsePayload> {
    const response = await fetch(this.url(`/sessions/${sessionId}/questions`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ question }),
    });
    return parseJson(response);
  }

  async getSession(sessionId: string): Promise<SessionPayload> {
    const response = await fetch(this.url(`/sessions/${sessionId}`));
    return parseJson(response);
  }

  async listSessions(): Promise<SessionSummaryPayload[]> {
    const response = await fetch(this.url("/sessions"));
    const body = await parseJson<{ sessions: SessionSummaryPayload[] }>(response);
    return body.sessions;
  }

  async recordOverride(
    sessionId: string,
    exchangeIndex: number,
    override: OverrideRequest,
  ): Promise<ExchangePayload> {
    const response = await fetch(
      this.url(`/sessions/${sessionId}/exchanges/${exchangeIndex}/override`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(override),
      },
    );
    return parseJson(response);
  }

  async runReport(runId: string): Promise<Record<string, unknown>> {
    const response = await fetch(this.url(`/runs/${runId}/report`));
    return parseJson(response);
  }
}
