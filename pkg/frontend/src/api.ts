/** Typed client over the platform's envelope API.
 *
 * Every call resolves the envelope: `ok` responses return `data`, error
 * envelopes throw `ApiRequestError` carrying the machine-readable code and
 * positioned diagnostics. A 401 additionally fires `onUnauthorized` so the
 * shell can route back to login without each view caring.
 */

export interface Diagnostic {
  rule: string;
  message: string;
  row: number | null;
  col: number | null;
  severity: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  details: Diagnostic[];
}

export class ApiRequestError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details: Diagnostic[] = [],
  ) {
    super(message);
  }
}

export interface PrincipalInfo {
  kind: "tenant" | "user" | "admin";
  tenant: string | null;
  userid?: string;
}

export interface SessionInfo {
  token: string;
  expires_at: number;
  principal: PrincipalInfo;
}

export interface SchemaField {
  fname: string;
  ftype: "string" | "int" | "float" | "bool" | "date";
  attributes: string[];
}

export interface SchemaInfo {
  schemaid: string;
  group: string;
  entry: string;
  gpermission: string;
  opermission: string;
  fields: SchemaField[];
  /** the requesting principal's own effective permissions, server-computed */
  permissions: string;
}

export interface UserInfo {
  userid: string;
  username: string;
  memberships: string[];
  password?: string;
}

export interface RecordWire {
  id: string;
  values: Record<string, unknown>;
}

export interface QueryPage {
  records: RecordWire[];
  total: number;
}

export interface UploadSummary {
  tenant: string;
  system_name: string;
  groups: number;
  users: number;
  schemas: number;
}

export interface DryRunOutcome {
  valid: boolean;
  diagnostics: Diagnostic[];
  preview: string[][];
  summary: UploadSummary | null;
}

export interface ImportOutcome {
  inserted: number;
  ids: string[];
  rejected: Diagnostic[];
}

export interface QueryOptions {
  filter?: unknown;
  sort?: string;
  offset?: number;
  limit?: number;
}

export class ApiClient {
  onUnauthorized: (() => void) | null = null;

  constructor(
    private baseUrl: string = "",
    public token: string | null = null,
  ) {}

  private headers(): Record<string, string> {
    return this.token ? { Authorization: `Bearer ${this.token}` } : {};
  }

  private async unwrap<T>(resp: Response): Promise<T> {
    let body: { ok?: boolean; data?: T; error?: ApiErrorBody };
    try {
      body = (await resp.json()) as typeof body;
    } catch {
      throw new ApiRequestError(resp.status, "bad-envelope", "response was not an envelope");
    }
    if (body.ok && resp.ok) {
      return body.data as T;
    }
    const error = body.error ?? { code: "internal", message: "unknown error", details: [] };
    if (resp.status === 401 && this.onUnauthorized) {
      this.onUnauthorized();
    }
    throw new ApiRequestError(resp.status, error.code, error.message, error.details ?? []);
  }

  private async getJson<T>(path: string, params?: Record<string, string>): Promise<T> {
    const query = params && Object.keys(params).length ? `?${new URLSearchParams(params)}` : "";
    const resp = await fetch(`${this.baseUrl}${path}${query}`, { headers: this.headers() });
    return this.unwrap<T>(resp);
  }

  private async sendJson<T>(method: string, path: string, payload: unknown): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: { ...this.headers(), "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    return this.unwrap<T>(resp);
  }

  private async sendFile<T>(path: string, file: Blob, filename: string, params: Record<string, string>): Promise<T> {
    const form = new FormData();
    form.append("file", file, filename);
    const query = Object.keys(params).length ? `?${new URLSearchParams(params)}` : "";
    const resp = await fetch(`${this.baseUrl}${path}${query}`, {
      method: "POST",
      headers: this.headers(),
      body: form,
    });
    return this.unwrap<T>(resp);
  }

  health(): Promise<{ status: string; tenants: number }> {
    return this.getJson("/api/health");
  }

  async authTenant(tenant: string, password: string): Promise<SessionInfo> {
    const session = await this.sendJson<SessionInfo>("POST", "/api/auth/tenant", { tenant, password });
    this.token = session.token;
    return session;
  }

  async authUser(tenant: string, userid: string, password: string): Promise<SessionInfo> {
    const session = await this.sendJson<SessionInfo>("POST", "/api/auth/user", {
      tenant,
      userid,
      password,
    });
    this.token = session.token;
    return session;
  }

  uploadSystem(file: Blob, filename: string, mode: "create" | "replace"): Promise<UploadSummary> {
    return this.sendFile("/api/systems", file, filename, { mode });
  }

  validateSystem(file: Blob, filename: string, mode: "create" | "replace" = "create"): Promise<DryRunOutcome> {
    return this.sendFile("/api/systems", file, filename, { mode, dry_run: "true" });
  }

  getGroups(): Promise<{ groups: string[] }> {
    return this.getJson("/api/meta/groups");
  }

  putGroups(groups: string[]): Promise<{ groups: string[] }> {
    return this.sendJson("PUT", "/api/meta/groups", groups);
  }

  getUsers(): Promise<{ users: UserInfo[] }> {
    return this.getJson("/api/meta/users");
  }

  putUsers(users: UserInfo[]): Promise<{ users: string[] }> {
    return this.sendJson("PUT", "/api/meta/users", users);
  }

  getSchemas(): Promise<{ schemas: SchemaInfo[] }> {
    return this.getJson("/api/meta/schemas");
  }

  putSchemas(schemas: Omit<SchemaInfo, "permissions">[]): Promise<{ schemas: string[] }> {
    return this.sendJson("PUT", "/api/meta/schemas", schemas);
  }

  insertRecord(schemaid: string, values: Record<string, unknown>): Promise<{ record: RecordWire }> {
    return this.sendJson("POST", `/api/data/${encodeURIComponent(schemaid)}`, values);
  }

  queryRecords(schemaid: string, options: QueryOptions = {}): Promise<QueryPage> {
    const params: Record<string, string> = {};
    if (options.filter !== undefined) params.filter = JSON.stringify(options.filter);
    if (options.sort) params.sort = options.sort;
    if (options.offset !== undefined) params.offset = String(options.offset);
    if (options.limit !== undefined) params.limit = String(options.limit);
    return this.getJson(`/api/data/${encodeURIComponent(schemaid)}`, params);
  }

  getRecord(schemaid: string, id: string): Promise<{ record: RecordWire }> {
    return this.getJson(`/api/data/${encodeURIComponent(schemaid)}/${encodeURIComponent(id)}`);
  }

  updateRecord(
    schemaid: string,
    id: string,
    partial: Record<string, unknown>,
  ): Promise<{ record: RecordWire }> {
    return this.sendJson("PUT", `/api/data/${encodeURIComponent(schemaid)}/${encodeURIComponent(id)}`, partial);
  }

  deleteRecord(schemaid: string, id: string): Promise<{ deleted: string }> {
    return this.sendJson("DELETE", `/api/data/${encodeURIComponent(schemaid)}/${encodeURIComponent(id)}`, {});
  }

  importFile(schemaid: string, file: Blob, filename: string, atomic: boolean): Promise<ImportOutcome> {
    return this.sendFile(`/api/data/${encodeURIComponent(schemaid)}/import`, file, filename, {
      atomic: atomic ? "true" : "false",
    });
  }

  async exportCsv(schemaid: string): Promise<Uint8Array> {
    const resp = await fetch(`${this.baseUrl}/api/data/${encodeURIComponent(schemaid)}/export?format=csv`, {
      headers: this.headers(),
    });
    if (!resp.ok) {
      return this.unwrap<never>(resp);
    }
    return new Uint8Array(await resp.arrayBuffer());
  }

  stats(
    schemaid: string,
    field: string,
    agg: string,
    filter?: unknown,
  ): Promise<{ field: string; agg: string; value: number | string | null }> {
    const params: Record<string, string> = { field, agg };
    if (filter !== undefined) params.filter = JSON.stringify(filter);
    return this.getJson(`/api/data/${encodeURIComponent(schemaid)}/stats`, params);
  }
}
