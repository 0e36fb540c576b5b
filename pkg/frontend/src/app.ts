/** Console shell: login, tenant administration, user data grids.
 *
 * All data and all authority flow through the public API: the grid is a
 * paged GET, edits are PUTs, affordances come from the server's permission
 * strings, and forced requests surface the server's own 403.
 */

import {
  ApiClient,
  ApiRequestError,
  type Diagnostic,
  type RecordWire,
  type SchemaField,
  type SchemaInfo,
  type SessionInfo,
  type UserInfo,
} from "./api.js";
import { affordancesFrom, NO_AFFORDANCES, type Affordances } from "./affordances.js";
import { h, clear, option } from "./dom.js";
import {
  draftToWire,
  emptyDraft,
  isEmpty,
  opsForType,
  type FilterDraft,
  type PredicateDraft,
} from "./filters.js";
import {
  clampOffset,
  currentPage,
  nextOffset,
  pageCount,
  prevOffset,
  sortField,
  toggleSort,
  type PageState,
} from "./grid.js";
import {
  clearSession,
  loadSession,
  parkDraftFilter,
  saveSession,
  takeDraftFilter,
  type ConsoleSession,
} from "./session.js";
import { cellKey, describeDiagnostic, diagnosticCells } from "./upload.js";

const PAGE_SIZE = 25;

export class ConsoleApp {
  private api: ApiClient;
  private session: ConsoleSession | null = null;
  private banner = h("div", { class: "banner hidden" });
  private view = h("main", { class: "view" });
  private draft: FilterDraft = emptyDraft();
  private sort: string | null = null;
  private page: PageState = { offset: 0, limit: PAGE_SIZE, total: 0 };

  constructor(
    private root: HTMLElement,
    baseUrl = "",
  ) {
    this.api = new ApiClient(baseUrl);
    this.api.onUnauthorized = () => this.handleExpiry();
  }

  start(): void {
    this.root.append(
      h("header", { class: "top" }, h("h1", {}, "retadms console"), this.sessionBadge()),
      this.banner,
      this.view,
    );
    const saved = loadSession();
    if (saved) {
      this.session = saved;
      this.api.token = saved.token;
      void this.showHome();
    } else {
      this.showLogin();
    }
  }

  private sessionBadge(): HTMLElement {
    const badge = h("div", { class: "session-badge" });
    this.renderBadge = () => {
      clear(badge);
      if (!this.session) return;
      const p = this.session.principal;
      badge.append(
        h("span", {}, p.kind === "tenant" ? `tenant ${p.tenant}` : `${p.userid} @ ${p.tenant}`),
        h("button", { class: "linkish", onclick: () => this.logout() }, "log out"),
      );
    };
    return badge;
  }

  private renderBadge: () => void = () => {};

  private notify(text: string, details: Diagnostic[] = [], kind: "error" | "info" = "error"): void {
    clear(this.banner);
    this.banner.className = `banner ${kind}`;
    this.banner.append(h("p", {}, text));
    if (details.length) {
      this.banner.append(h("ul", {}, ...details.map((d) => h("li", {}, describeDiagnostic(d)))));
    }
  }

  private clearBanner(): void {
    this.banner.className = "banner hidden";
    clear(this.banner);
  }

  private async guard<T>(work: () => Promise<T>): Promise<T | null> {
    try {
      const result = await work();
      this.clearBanner();
      return result;
    } catch (err) {
      if (err instanceof ApiRequestError) {
        if (err.status !== 401) {
          this.notify(`${err.code}: ${err.message}`, err.details);
        }
        return null;
      }
      this.notify(String(err));
      return null;
    }
  }

  private handleExpiry(): void {
    if (this.session?.activeSchema && !isEmpty(this.draft)) {
      parkDraftFilter(this.session.activeSchema, this.draft);
    }
    this.session = null;
    this.api.token = null;
    clearSession();
    this.renderBadge();
    this.notify("session expired: log in again to continue", [], "info");
    this.showLogin();
  }

  private logout(): void {
    this.session = null;
    this.api.token = null;
    clearSession();
    this.renderBadge();
    this.clearBanner();
    this.showLogin();
  }

  private adopt(info: SessionInfo): void {
    this.session = {
      token: info.token,
      principal: info.principal,
      activeSchema: null,
    };
    this.api.token = info.token;
    saveSession(this.session);
    this.renderBadge();
  }

  // -- login ---------------------------------------------------------------

  private showLogin(): void {
    clear(this.view);
    const tenantField = h("input", { placeholder: "tenant id", autocomplete: "username" });
    const useridField = h("input", { placeholder: "userid" });
    const passwordField = h("input", { type: "password", placeholder: "password" });
    const asUser = h("input", { type: "checkbox" });
    const submit = async (ev: Event) => {
      ev.preventDefault();
      const outcome = await this.guard(() =>
        asUser.checked
          ? this.api.authUser(tenantField.value, useridField.value, passwordField.value)
          : this.api.authTenant(tenantField.value, passwordField.value),
      );
      if (outcome) {
        this.adopt(outcome);
        await this.showHome();
      }
    };
    this.view.append(
      h(
        "form",
        { class: "card login", onsubmit: submit },
        h("h2", {}, "log in"),
        h("label", {}, asUser, " log in as ordinary user"),
        tenantField,
        useridField,
        passwordField,
        h("button", { type: "submit" }, "log in"),
        h(
          "p",
          { class: "hint" },
          "no system yet? upload a requirements table below to register one",
        ),
        h("div", {}, this.uploadPanel("create")),
      ),
    );
    asUser.addEventListener("change", () => {
      useridField.style.display = asUser.checked ? "" : "none";
    });
    useridField.style.display = "none";
  }

  private async showHome(): Promise<void> {
    if (!this.session) return this.showLogin();
    if (this.session.principal.kind === "tenant") {
      await this.showTenantConsole();
    } else {
      await this.showUserConsole();
    }
  }

  // -- upload (shared by registration and tenant replace) --------------------

  private uploadPanel(mode: "create" | "replace"): HTMLElement {
    const fileInput = h("input", { type: "file", accept: ".csv,.xlsx" });
    const outcome = h("div", { class: "upload-outcome" });
    const run = async (dryRun: boolean) => {
      const file = fileInput.files?.[0];
      if (!file) {
        this.notify("choose a requirements table first");
        return;
      }
      clear(outcome);
      if (dryRun) {
        const result = await this.guard(() => this.api.validateSystem(file, file.name, mode));
        if (!result) return;
        const marked = diagnosticCells(result.diagnostics);
        outcome.append(
          result.valid
            ? this.summaryCard(result.summary!)
            : h(
                "div",
                {},
                h("h3", {}, "problems found"),
                h("ul", { class: "diagnostics" },
                  ...result.diagnostics.map((d) =>
                    h("li", {}, describeDiagnostic(d)),
                  )),
              ),
          this.previewTable(result.preview, marked),
        );
        return;
      }
      const summary = await this.guard(() => this.api.uploadSystem(file, file.name, mode));
      if (summary) {
        outcome.append(this.summaryCard(summary));
        this.notify(
          mode === "create"
            ? `system ${summary.tenant} is live: log in to manage it`
            : `system ${summary.tenant} replaced`,
          [],
          "info",
        );
      }
    };
    return h(
      "div",
      { class: "upload-panel" },
      h("h3", {}, mode === "create" ? "register a new system" : "replace this system"),
      fileInput,
      h("div", { class: "row" },
        h("button", { type: "button", onclick: () => void run(true) }, "validate"),
        h("button", { type: "button", onclick: () => void run(false) },
          mode === "create" ? "create system" : "replace system"),
      ),
      outcome,
    );
  }

  private summaryCard(summary: {
    tenant: string;
    system_name: string;
    groups: number;
    users: number;
    schemas: number;
  }): HTMLElement {
    return h(
      "div",
      { class: "summary-card" },
      h("h3", {}, `${summary.system_name} (${summary.tenant})`),
      h("p", {}, `${summary.groups} groups · ${summary.users} users · ${summary.schemas} schemas`),
    );
  }

  private previewTable(rows: string[][], marked: Set<string>): HTMLElement {
    const table = h("table", { class: "preview" });
    rows.forEach((row, r) => {
      const tr = h("tr", {}, h("th", {}, String(r + 1)));
      row.forEach((cell, c) => {
        tr.append(
          h("td", { class: marked.has(cellKey(r + 1, c + 1)) ? "bad-cell" : "" }, cell),
        );
      });
      table.append(tr);
    });
    return table;
  }

  // -- tenant console ---------------------------------------------------------

  private async showTenantConsole(): Promise<void> {
    clear(this.view);
    const data = await this.guard(async () => ({
      groups: (await this.api.getGroups()).groups,
      users: (await this.api.getUsers()).users,
      schemas: (await this.api.getSchemas()).schemas,
    }));
    if (!data) return;

    const groupsInput = h("input", { value: data.groups.join(", "), size: 40 });
    const saveGroups = async () => {
      const groups = groupsInput.value.split(",").map((g) => g.trim()).filter(Boolean);
      if (await this.guard(() => this.api.putGroups(groups))) {
        this.notify("groups saved", [], "info");
        await this.showTenantConsole();
      }
    };

    this.view.append(
      h("section", { class: "card" },
        h("h2", {}, "groups"),
        h("div", { class: "row" }, groupsInput,
          h("button", { onclick: () => void saveGroups() }, "save groups")),
      ),
      this.usersSection(data.users, data.groups),
      h("section", { class: "card" },
        h("h2", {}, "schemas"),
        ...data.schemas.map((s) => this.schemaCard(s)),
        h("p", { class: "hint" },
          "schema structure changes go through a replace upload; records survive when a schema's field list is unchanged"),
        this.uploadPanel("replace"),
      ),
    );
  }

  private usersSection(users: UserInfo[], groups: string[]): HTMLElement {
    const tbody = h("tbody", {});
    const rows: { userid: HTMLInputElement; username: HTMLInputElement; password: HTMLInputElement; memberships: HTMLInputElement; existing: boolean }[] = [];
    const addRow = (user?: UserInfo) => {
      const userid = h("input", { value: user?.userid ?? "", size: 10 });
      const username = h("input", { value: user?.username ?? "", size: 14 });
      const password = h("input", { type: "password", placeholder: user ? "(unchanged)" : "password", size: 12 });
      const memberships = h("input", { value: user ? user.memberships.join(";") : "", size: 16 });
      const row = { userid, username, password, memberships, existing: !!user };
      rows.push(row);
      const tr = h("tr", {},
        h("td", {}, userid), h("td", {}, username), h("td", {}, password),
        h("td", {}, memberships),
        h("td", {}, h("button", {
          onclick: () => { tr.remove(); rows.splice(rows.indexOf(row), 1); },
        }, "remove")),
      );
      tbody.append(tr);
    };
    users.forEach((u) => addRow(u));
    const save = async () => {
      const payload: UserInfo[] = rows.map((r) => ({
        userid: r.userid.value.trim(),
        username: r.username.value,
        memberships: r.memberships.value.split(";").map((m) => m.trim()).filter(Boolean),
        ...(r.password.value ? { password: r.password.value } : {}),
      }));
      if (await this.guard(() => this.api.putUsers(payload))) {
        this.notify("users saved", [], "info");
        await this.showTenantConsole();
      }
    };
    return h("section", { class: "card" },
      h("h2", {}, "users"),
      h("p", { class: "hint" }, `groups: ${groups.join(", ") || "(none)"}; memberships are ;-separated`),
      h("table", { class: "grid" },
        h("thead", {}, h("tr", {},
          h("th", {}, "userid"), h("th", {}, "username"), h("th", {}, "password"),
          h("th", {}, "memberships"), h("th", {}, ""))),
        tbody),
      h("div", { class: "row" },
        h("button", { onclick: () => addRow() }, "add user"),
        h("button", { onclick: () => void save() }, "save users")),
    );
  }

  private schemaCard(schema: SchemaInfo): HTMLElement {
    return h("div", { class: "schema-card" },
      h("h3", {}, schema.schemaid),
      h("p", {},
        `group ${schema.group} (${schema.gpermission || "-"}) · others ${schema.opermission || "-"} · entry ${schema.entry}`),
      h("ul", {}, ...schema.fields.map((f) =>
        h("li", {}, `${f.fname}: ${f.ftype}${f.attributes.length ? ` [${f.attributes.join(", ")}]` : ""}`))),
    );
  }

  // -- user console -------------------------------------------------------------

  private async showUserConsole(): Promise<void> {
    clear(this.view);
    const listing = await this.guard(() => this.api.getSchemas());
    if (!listing) return;
    const schemas = listing.schemas;
    if (!schemas.length) {
      this.view.append(h("p", {}, "no schemas are visible to this account"));
      return;
    }
    const active =
      schemas.find((s) => s.schemaid === this.session?.activeSchema) ?? schemas[0];
    if (this.session) {
      this.session.activeSchema = active.schemaid;
      saveSession(this.session);
    }
    const parked = takeDraftFilter(active.schemaid);
    if (parked) this.draft = parked;

    const picker = h("select", {},
      ...schemas.map((s) => option(s.schemaid, `${s.schemaid} (${s.permissions})`, s === active)));
    picker.addEventListener("change", () => {
      if (this.session) {
        this.session.activeSchema = picker.value;
        saveSession(this.session);
      }
      this.draft = emptyDraft();
      this.sort = null;
      this.page = { offset: 0, limit: PAGE_SIZE, total: 0 };
      void this.showUserConsole();
    });

    this.view.append(
      h("section", { class: "card" },
        h("div", { class: "row" }, h("label", {}, "schema "), picker,
          h("span", { class: "perm-badge" }, `your permissions: ${active.permissions}`)),
      ),
    );
    await this.renderGrid(active);
  }

  private async renderGrid(schema: SchemaInfo): Promise<void> {
    const can = affordancesFrom(schema.permissions);
    const gridHost = h("section", { class: "card grid-host" });
    this.view.append(gridHost);
    const refresh = async () => {
      clear(gridHost);
      let wire;
      try {
        wire = isEmpty(this.draft) ? undefined : draftToWire(this.draft, schema.fields);
      } catch (err) {
        this.notify(`filter: ${(err as Error).message}`);
        wire = undefined;
      }
      const pageData = can.read
        ? await this.guard(() =>
            this.api.queryRecords(schema.schemaid, {
              filter: wire,
              sort: this.sort ?? undefined,
              offset: this.page.offset,
              limit: this.page.limit,
            }),
          )
        : { records: [], total: 0 };
      if (!pageData) return;
      this.page.total = pageData.total;
      this.page.offset = clampOffset(this.page.offset, this.page.total, this.page.limit);
      gridHost.append(
        this.filterBuilder(schema, refresh),
        this.toolbar(schema, can, refresh),
        this.table(schema, can, pageData.records, refresh),
        this.pager(refresh),
        this.statsPanel(schema),
      );
    };
    await refresh();
  }

  private filterBuilder(schema: SchemaInfo, refresh: () => Promise<void>): HTMLElement {
    const host = h("div", { class: "filter-builder" });
    const renderRows = () => {
      clear(host);
      host.append(h("h3", {}, "combined query"));
      (["all", "any"] as const).forEach((clause) => {
        const list = this.draft[clause];
        const section = h("div", { class: "clause" },
          h("span", { class: "clause-label" },
            clause === "all" ? "match all of" : "and at least one of"));
        list.forEach((p, i) => {
          const fieldSel = h("select", {},
            ...schema.fields.map((f) => option(f.fname, f.fname, f.fname === p.field)));
          const ftype = schema.fields.find((f) => f.fname === fieldSel.value)?.ftype ?? "string";
          const opSel = h("select", {},
            ...opsForType(ftype).map((op) => option(op, op, op === p.op)));
          const value = h("input", {
            value: p.raw,
            placeholder: p.op === "in" ? "comma,separated" : "value",
          });
          fieldSel.addEventListener("change", () => {
            list[i] = { field: fieldSel.value, op: "eq", raw: value.value };
            renderRows();
          });
          opSel.addEventListener("change", () => {
            list[i] = { ...list[i], op: opSel.value as PredicateDraft["op"] };
          });
          value.addEventListener("input", () => {
            list[i] = { ...list[i], raw: value.value };
          });
          section.append(h("span", { class: "pred" }, fieldSel, opSel, value,
            h("button", { onclick: () => { list.splice(i, 1); renderRows(); } }, "×")));
        });
        section.append(h("button", {
          class: "linkish",
          onclick: () => {
            list.push({ field: schema.fields[0].fname, op: "eq", raw: "" });
            renderRows();
          },
        }, `+ ${clause} condition`));
        host.append(section);
      });
      host.append(h("div", { class: "row" },
        h("button", { onclick: () => { this.page.offset = 0; void refresh(); } }, "apply"),
        h("button", {
          class: "linkish",
          onclick: () => { this.draft = emptyDraft(); this.page.offset = 0; void refresh(); },
        }, "clear"),
      ));
    };
    renderRows();
    return host;
  }

  private toolbar(schema: SchemaInfo, can: Affordances, refresh: () => Promise<void>): HTMLElement {
    const fileInput = h("input", { type: "file", accept: ".csv,.xlsx", disabled: !can.create });
    const importBtn = h("button", { disabled: !can.create, onclick: async () => {
      const file = fileInput.files?.[0];
      if (!file) return this.notify("choose a data file first");
      const outcome = await this.guard(() => this.api.importFile(schema.schemaid, file, file.name, true));
      if (outcome) {
        this.notify(`imported ${outcome.inserted} records`, outcome.rejected, "info");
        await refresh();
      }
    } }, "import");
    const exportBtn = h("button", { disabled: !can.read, onclick: async () => {
      const bytes = await this.guard(() => this.api.exportCsv(schema.schemaid));
      if (!bytes) return;
      const blob = new Blob([bytes as BlobPart], { type: "text/csv" });
      const url = URL.createObjectURL(blob);
      const a = h("a", { href: url, download: `${schema.schemaid}.csv` });
      document.body.append(a);
      a.click();
      a.remove();
      URL.revokeObjectURL(url);
    } }, "export csv");
    return h("div", { class: "row toolbar" },
      h("span", { class: "total-badge" }, `total: ${this.page.total}`),
      fileInput, importBtn, exportBtn);
  }

  private table(
    schema: SchemaInfo,
    can: Affordances,
    records: RecordWire[],
    refresh: () => Promise<void>,
  ): HTMLElement {
    const thead = h("thead", {}, h("tr", {},
      h("th", {}, "id"),
      ...schema.fields.map((f) => {
        const active = sortField(this.sort) === f.fname;
        const th = h("th", { class: "sortable" },
          `${f.fname}${active ? (this.sort!.startsWith("-") ? " ↓" : " ↑") : ""}`);
        th.addEventListener("click", () => {
          this.sort = toggleSort(this.sort, f.fname);
          void refresh();
        });
        return th;
      }),
      h("th", {}, "")));
    const tbody = h("tbody", {});
    records.forEach((record) => tbody.append(this.recordRow(schema, can, record, refresh)));
    if (can.create) {
      tbody.append(this.insertRow(schema, refresh));
    }
    return h("table", { class: "grid" }, thead, tbody);
  }

  private recordRow(
    schema: SchemaInfo,
    can: Affordances,
    record: RecordWire,
    refresh: () => Promise<void>,
  ): HTMLElement {
    const tr = h("tr", {});
    const renderStatic = () => {
      clear(tr);
      tr.append(h("td", { class: "record-id" }, record.id));
      schema.fields.forEach((f) => {
        const value = record.values[f.fname];
        tr.append(h("td", {}, value === null || value === undefined ? "" : String(value)));
      });
      const editBtn = h("button", { disabled: !can.update, title: can.update ? "" : "no update permission", onclick: () => renderEditing() }, "edit");
      const deleteBtn = h("button", { disabled: !can.delete, title: can.delete ? "" : "no delete permission", onclick: async () => {
        if (await this.guard(() => this.api.deleteRecord(schema.schemaid, record.id))) {
          await refresh();
        }
      } }, "delete");
      tr.append(h("td", { class: "actions" }, editBtn, deleteBtn));
    };
    const renderEditing = () => {
      clear(tr);
      tr.append(h("td", { class: "record-id" }, record.id));
      const inputs = new Map<string, HTMLInputElement>();
      schema.fields.forEach((f) => {
        const value = record.values[f.fname];
        const input = h("input", {
          value: value === null || value === undefined ? "" : String(value),
          size: 10,
        });
        inputs.set(f.fname, input);
        tr.append(h("td", {}, input));
      });
      const save = async () => {
        const partial: Record<string, unknown> = {};
        for (const f of schema.fields) {
          const raw = inputs.get(f.fname)!.value;
          partial[f.fname] = raw === "" ? null : this.parseCell(raw, f);
        }
        const outcome = await this.guard(() =>
          this.api.updateRecord(schema.schemaid, record.id, partial));
        if (outcome) {
          record.values = outcome.record.values;
          await refresh();
        }
      };
      tr.append(h("td", { class: "actions" },
        h("button", { onclick: () => void save() }, "save"),
        h("button", { onclick: () => renderStatic() }, "cancel")));
    };
    renderStatic();
    return tr;
  }

  private insertRow(schema: SchemaInfo, refresh: () => Promise<void>): HTMLElement {
    const tr = h("tr", { class: "insert-row" }, h("td", {}, "new"));
    const inputs = new Map<string, HTMLInputElement>();
    schema.fields.forEach((f) => {
      const input = h("input", { placeholder: f.ftype, size: 10 });
      inputs.set(f.fname, input);
      tr.append(h("td", {}, input));
    });
    tr.append(h("td", { class: "actions" }, h("button", { onclick: async () => {
      const values: Record<string, unknown> = {};
      for (const f of schema.fields) {
        const raw = inputs.get(f.fname)!.value;
        if (raw !== "") values[f.fname] = this.parseCell(raw, f);
      }
      if (await this.guard(() => this.api.insertRecord(schema.schemaid, values))) {
        await refresh();
      }
    } }, "insert")));
    return tr;
  }

  private parseCell(raw: string, f: SchemaField): unknown {
    switch (f.ftype) {
      case "int":
        return /^[+-]?\d+$/.test(raw.trim()) ? Number(raw.trim()) : raw;
      case "float": {
        const value = Number(raw.trim());
        return Number.isFinite(value) && raw.trim() !== "" ? value : raw;
      }
      case "bool": {
        const lowered = raw.trim().toLowerCase();
        return lowered === "true" ? true : lowered === "false" ? false : raw;
      }
      default:
        return raw; // strings and ISO dates travel as text
    }
  }

  private pager(refresh: () => Promise<void>): HTMLElement {
    const pages = pageCount(this.page.total, this.page.limit);
    return h("div", { class: "row pager" },
      h("button", { disabled: this.page.offset <= 0, onclick: () => {
        this.page.offset = prevOffset(this.page);
        void refresh();
      } }, "previous"),
      h("span", {}, `page ${currentPage(this.page)} of ${pages}`),
      h("button", {
        disabled: currentPage(this.page) >= pages,
        onclick: () => {
          this.page.offset = nextOffset(this.page);
          void refresh();
        },
      }, "next"));
  }

  private statsPanel(schema: SchemaInfo): HTMLElement {
    const compat: Record<string, string[]> = {
      count: schema.fields.map((f) => f.fname),
      sum: schema.fields.filter((f) => ["int", "float"].includes(f.ftype)).map((f) => f.fname),
      avg: schema.fields.filter((f) => ["int", "float"].includes(f.ftype)).map((f) => f.fname),
      min: schema.fields.filter((f) => ["int", "float", "date"].includes(f.ftype)).map((f) => f.fname),
      max: schema.fields.filter((f) => ["int", "float", "date"].includes(f.ftype)).map((f) => f.fname),
    };
    const aggSel = h("select", {}, ...Object.keys(compat).map((a) => option(a)));
    const fieldSel = h("select", {});
    const renderFields = () => {
      clear(fieldSel);
      for (const fname of compat[aggSel.value]) fieldSel.append(option(fname));
    };
    aggSel.addEventListener("change", renderFields);
    renderFields();
    const result = h("span", { class: "stats-result" });
    const run = async () => {
      let wire;
      try {
        wire = isEmpty(this.draft) ? undefined : draftToWire(this.draft, schema.fields);
      } catch {
        wire = undefined;
      }
      const outcome = await this.guard(() =>
        this.api.stats(schema.schemaid, fieldSel.value, aggSel.value, wire));
      if (outcome) {
        result.textContent = ` ${outcome.agg}(${outcome.field}) = ${outcome.value === null ? "(no values)" : outcome.value}`;
      }
    };
    return h("div", { class: "row stats" },
      h("span", {}, "statistics (over the current filter): "),
      aggSel, fieldSel,
      h("button", { onclick: () => void run() }, "compute"), result);
  }
}

export function mount(root: HTMLElement, baseUrl = ""): ConsoleApp {
  const app = new ConsoleApp(root, baseUrl);
  app.start();
  return app;
}
