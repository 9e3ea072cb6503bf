/**
 * Typed client for the exam service. Everything the browser knows comes
 * through here, and everything here goes through /v1 -- the client never
 * computes marks, deadlines, or eligibility on its own.
 */

export interface ErrorEnvelope {
  code: string;
  message: string;
  retriable: boolean;
}

export class ApiError extends Error {
  readonly code: string;
  readonly retriable: boolean;
  readonly status: number;

  constructor(envelope: ErrorEnvelope, status: number) {
    super(envelope.message);
    this.name = "ApiError";
    this.code = envelope.code;
    this.retriable = envelope.retriable;
    this.status = status;
  }
}

/** Network-level failure (server unreachable, invalid response body). */
export class TransportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TransportError";
  }
}

export interface SessionView {
  state: string;
  reg_no: string;
  sitting_id: string;
  exam_id: string;
  started_at: string | null;
  deadline: string | null;
  remaining_seconds: number | null;
  server_now: string;
  answered: string[];
}

export interface AuthResponse extends SessionView {
  token: string;
}

export interface SecurityImageInfo {
  sitting_id: string;
  image_index: number;
  confirm_code: string;
  derivation: string;
  glyph_name: string;
}

export interface PaperOption {
  label: string;
  text: string;
}

export interface PaperQuestion {
  position: number;
  id: string;
  kind: "objective" | "essay";
  prompt: string;
  resource_refs: string[];
  options?: PaperOption[];
  max_marks?: number;
  answer_sentinel?: string;
}

export interface PaperResponse {
  questions: PaperQuestion[];
  session: SessionView;
}

export interface BeginResponse {
  state: string;
  started_at: string;
  deadline: string;
  server_now: string;
}

export interface AnswerReceipt {
  question_id: string;
  recorded_at: string;
  answered: number;
}

export interface SubmitResponse {
  state: string;
  submitted_at: string;
  termination: string;
  answered: number;
}

export interface SittingStatus {
  sitting_id: string;
  candidates: { reg_no: string; state: string }[];
  counts: Record<string, number>;
  security_image: SecurityImageInfo;
  server_now: string;
}

export interface ResultPayload {
  reg_no: string;
  exam_id: string;
  objective_marks: number;
  essay_marks: Record<string, number>;
  essay_marks_total: number;
  total: number;
  max_total: number;
  status: string;
}

export interface CardIssue {
  card_id: string;
  reg_no: string;
  release_time: string;
  pin: string;
}

export interface SittingOpened {
  sitting_id: string;
  exam_id: string;
  ready: boolean;
  start_time: string;
  duration_minutes: number;
  security_image: SecurityImageInfo;
  environment_digest: string;
}

export interface LockdownSelfReport {
  communicationsDisabled: boolean;
  externalStorageBlocked: boolean;
  environmentDigest: string; // hex, as handed out when the sitting opened
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ExamApi {
  private readonly base: string;
  private readonly fetchFn: FetchLike;
  private readonly adminToken: string | null;

  constructor(baseUrl: string, opts: { fetchFn?: FetchLike; adminToken?: string } = {}) {
    this.base = baseUrl.replace(/\/+$/, "");
    // bind so a bare window.fetch keeps its receiver
    this.fetchFn = opts.fetchFn ?? ((input, init) => fetch(input, init));
    this.adminToken = opts.adminToken ?? null;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["content-type"] = "application/json";
    if (this.adminToken) headers["authorization"] = `Bearer ${this.adminToken}`;

    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new TransportError(`service unreachable: ${String(err)}`);
    }

    if (resp.status === 200 && path.endsWith(".csv")) {
      return (await resp.text()) as unknown as T;
    }

    let data: unknown = null;
    try {
      data = await resp.json();
    } catch {
      throw new TransportError(`response is not JSON (HTTP ${resp.status})`);
    }
    if (!resp.ok) {
      const env = data as Partial<ErrorEnvelope>;
      throw new ApiError(
        {
          code: env.code ?? "UnknownError",
          message: env.message ?? `HTTP ${resp.status}`,
          retriable: env.retriable ?? false,
        },
        resp.status,
      );
    }
    return data as T;
  }

  // -- candidate ------------------------------------------------------------

  authenticate(regNo: string, identityNo: string, sittingId: string): Promise<AuthResponse> {
    return this.request("POST", "/v1/auth", {
      reg_no: regNo,
      identity_no: identityNo,
      sitting_id: sittingId,
    });
  }

  begin(token: string, report: LockdownSelfReport): Promise<BeginResponse> {
    return this.request("POST", `/v1/sessions/${token}/begin`, {
      communications_disabled: report.communicationsDisabled,
      external_storage_blocked: report.externalStorageBlocked,
      environment_digest: report.environmentDigest,
    });
  }

  paper(token: string): Promise<PaperResponse> {
    return this.request("GET", `/v1/sessions/${token}/paper`);
  }

  sessionView(token: string): Promise<SessionView> {
    return this.request("GET", `/v1/sessions/${token}`);
  }

  saveAnswer(token: string, questionId: string, value: string): Promise<AnswerReceipt> {
    return this.request("PUT", `/v1/sessions/${token}/answers/${questionId}`, { value });
  }

  submit(token: string): Promise<SubmitResponse> {
    return this.request("POST", `/v1/sessions/${token}/submit`);
  }

  serverTime(): Promise<{ server_now: string }> {
    return this.request("GET", "/v1/time");
  }

  // -- results --------------------------------------------------------------

  checkResult(regNo: string, identityNo: string, pin: string): Promise<ResultPayload> {
    return this.request("POST", "/v1/results/check", {
      reg_no: regNo,
      identity_no: identityNo,
      pin,
    });
  }

  // -- invigilator ------------------------------------------------------------

  sittingStatus(sittingId: string): Promise<SittingStatus> {
    return this.request("GET", `/v1/sittings/${sittingId}`);
  }

  confirmImage(
    sittingId: string,
    observedIndex: number,
    observedCode: string,
  ): Promise<{ sitting_id: string; outcome: string }> {
    return this.request("POST", `/v1/invigilator/${sittingId}/confirm`, {
      observed_index: observedIndex,
      observed_code: observedCode,
    });
  }

  // -- administration ---------------------------------------------------------

  uploadPackage(packageB64: string): Promise<{ exam_id: string; fingerprint: string }> {
    return this.request("POST", "/v1/packages", { package_b64: packageB64 });
  }

  openSitting(sittingId: string): Promise<SittingOpened> {
    return this.request("POST", `/v1/sittings/${sittingId}/open`);
  }

  issueCard(regNo: string, sittingId: string): Promise<CardIssue> {
    return this.request("POST", "/v1/cards", { reg_no: regNo, sitting_id: sittingId });
  }

  recordEssayMark(regNo: string, examId: string, questionId: string,
                  awarded: number, markerId: string):
      Promise<{ reg_no: string; exam_id: string; status: string; total: number }> {
    return this.request("POST", "/v1/marks", {
      reg_no: regNo,
      exam_id: examId,
      question_id: questionId,
      awarded,
      marker_id: markerId,
    });
  }

  resultsCsv(examId: string): Promise<string> {
    return this.request("GET", `/v1/exams/${examId}/results.csv`);
  }

  // test-clock control; compiled into the service only for simulated runs
  advanceClock(seconds: number): Promise<{ server_now: string; expired_sessions: number }> {
    return this.request("POST", "/v1/test-clock/advance", { seconds });
  }
}
