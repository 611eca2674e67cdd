// Typed client for the gateway HTTP API. The console never computes dialogue
// state itself: every markdown/state payload shown on screen comes from here.

export interface StatePayload {
  id: string;
  markdown: string;
  json: {
    active_domain: string | null;
    constraints: Record<string, Record<string, string>>;
    booking_info: Record<string, Record<string, string>>;
    booking_status: Record<string, string>;
    booking_reference: Record<string, string>;
    results: { domain: string; id: string; slots: Record<string, string> }[];
    result_count: number;
    insufficient: string[];
    selected: string | null;
    chat_log: [string, string][];
  };
}

export interface SessionLog {
  id: string;
  goal: unknown;
  created: number;
  updated: number;
  events: { actor: string; kind: string; payload: string; state_hash: string }[];
  rating: Rating | null;
}

export interface Rating {
  goal_success: boolean;
  coherence: "win" | "lose" | "tie";
  notes?: string;
  comparison?: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`gateway error ${status}: ${JSON.stringify(detail)}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  const body = await response.json().catch(() => null);
  if (!response.ok) {
    throw new ApiError(response.status, body && (body as { detail?: unknown }).detail);
  }
  return body as T;
}

export class GatewayClient {
  constructor(public baseUrl: string) {}

  createSession(goal?: unknown): Promise<{ id: string; goal: unknown }> {
    return request(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: JSON.stringify(goal ? { goal } : {}),
    });
  }

  userTurn(sessionId: string, text: string): Promise<StatePayload> {
    return request(`${this.baseUrl}/sessions/${sessionId}/user`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  command(sessionId: string, command: string): Promise<StatePayload> {
    return request(`${this.baseUrl}/sessions/${sessionId}/action`, {
      method: "POST",
      body: JSON.stringify({ command }),
    });
  }

  agentChat(sessionId: string, text: string): Promise<StatePayload> {
    return request(`${this.baseUrl}/sessions/${sessionId}/action`, {
      method: "POST",
      body: JSON.stringify({ act: "Chat", sequence: text }),
    });
  }

  state(sessionId: string): Promise<StatePayload> {
    return request(`${this.baseUrl}/sessions/${sessionId}/state`);
  }

  log(sessionId: string): Promise<SessionLog> {
    return request(`${this.baseUrl}/sessions/${sessionId}/log`);
  }

  rate(sessionId: string, rating: Rating): Promise<{ ok: boolean; rating: Rating }> {
    return request(`${this.baseUrl}/sessions/${sessionId}/rating`, {
      method: "POST",
      body: JSON.stringify(rating),
    });
  }

  health(): Promise<{ status: string; sessions: number; domains: Record<string, number> }> {
    return request(`${this.baseUrl}/health`);
  }
}
