/** Typed client for the translation service JSON API. */

export interface TranslateResponse {
  hypotheses: { text: string; score: number }[];
}

export interface SessionCreateResponse {
  session_id: string;
  hypothesis: string;
}

export interface CorrectionResponse {
  hypothesis: string;
  validated_prefix_len: number;
}

export interface KsmrCounters {
  keystrokes: number;
  mouse_actions: number;
  iterations: number;
}

export interface AcceptResponse {
  final: string;
  ksmr_counters: KsmrCounters;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(res: Response): Promise<ApiError> {
  let code = "unknown_error";
  let message = res.statusText;
  try {
    const body = await res.json();
    code = body.code ?? code;
    message = body.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(res.status, code, message);
}

export class Client {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  health(): Promise<Response> {
    return this.fetchFn(this.baseUrl + "/health");
  }

  translate(source: string, nbest = 1): Promise<TranslateResponse> {
    return this.post("/translate", { source, nbest });
  }

  createSession(source: string): Promise<SessionCreateResponse> {
    return this.post("/session", { source });
  }

  correct(
    sessionId: string,
    position: number,
    character: string,
    finish = false,
  ): Promise<CorrectionResponse> {
    return this.post(`/session/${sessionId}/correction`, { position, character, finish });
  }

  accept(sessionId: string, learn: boolean): Promise<AcceptResponse> {
    return this.post(`/session/${sessionId}/accept`, { learn });
  }
}
