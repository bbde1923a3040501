// Four-page review workflow: upload -> configure -> logic preview -> review.

import { ApiError, ReviewApi, type RawDocumentIn } from "./api";
import { applyHighlight, downloadGolden, renderComparison, sourceDocsFor } from "./render";
import { canEnter, goTo, initialState, setHover, type Page, type ViewState } from "./state";
import { validateGoldenRecord } from "./types";

const BASE_URL = (window as { LCDS_BASE_URL?: string }).LCDS_BASE_URL ?? "";
const api = new ReviewApi(BASE_URL, "reviewer");

let state: ViewState = initialState();
let ruleEdits: Record<string, string> = {};

const app = document.getElementById("app")!;

function notify(message: string): void {
  state = { ...state, notice: message };
  renderNotice();
}

function renderNotice(): void {
  const bar = document.getElementById("notice")!;
  bar.textContent = state.notice ?? "";
  bar.hidden = !state.notice;
}

function nav(page: Page): void {
  state = goTo(state, page);
  render();
}

function renderNav(): HTMLElement {
  const bar = document.createElement("nav");
  bar.className = "pages";
  const labels: Record<Page, string> = { 1: "1 上传", 2: "2 配置", 3: "3 逻辑预览", 4: "4 对照审核" };
  ([1, 2, 3, 4] as Page[]).forEach((page) => {
    const button = document.createElement("button");
    button.textContent = labels[page];
    button.disabled = !canEnter(state, page);
    button.classList.toggle("active", state.page === page);
    button.addEventListener("click", () => nav(page));
    bar.appendChild(button);
  });
  return bar;
}

function renderUploadPage(root: HTMLElement): void {
  const form = document.createElement("div");
  form.className = "card";
  form.innerHTML = `
    <h2>上传病历文档</h2>
    <p>选择一次住院的全部原始文档（HTML / XML / JSON）。</p>
    <input type="file" id="files" multiple>
    <label>患者号 <input id="patient-id" value="P-demo"></label>
    <label>住院号 <input id="admission-id" value="demo"></label>
    <button id="upload-btn">上传并转换</button>
  `;
  form.querySelector("#upload-btn")!.addEventListener("click", () => {
    void (async () => {
      const input = form.querySelector<HTMLInputElement>("#files")!;
      const files = Array.from(input.files ?? []);
      if (files.length === 0) {
        notify("请先选择文档");
        return;
      }
      try {
        const session = await api.createSession();
        state = { ...state, sessionId: session.session_id };
        const documents: RawDocumentIn[] = [];
        for (const file of files) {
          documents.push({ doc_id: file.name.replace(/\.[^.]+$/, ""), payload: await file.text() });
        }
        await api.uploadDocuments(state.sessionId!, documents);
        const patientId = form.querySelector<HTMLInputElement>("#patient-id")!.value;
        const admissionId = form.querySelector<HTMLInputElement>("#admission-id")!.value;
        const converted = await api.convert(state.sessionId!, patientId, admissionId);
        state = { ...state, record: converted.record };
        nav(2);
      } catch (error) {
        notify(error instanceof ApiError ? `转换失败: ${error.message}` : String(error));
      }
    })();
  });
  root.appendChild(form);
}

function renderConfigPage(root: HTMLElement): void {
  const card = document.createElement("div");
  card.className = "card split";
  const left = document.createElement("div");
  left.innerHTML = "<h2>生成配置</h2>";
  const select = document.createElement("select");
  select.id = "department";
  const providerSelect = document.createElement("select");
  ["default", "mock", "http"].forEach((name) => {
    const option = document.createElement("option");
    option.value = name;
    option.textContent = name;
    providerSelect.appendChild(option);
  });
  void api.departments().then(({ departments }) => {
    departments.forEach((name) => {
      const option = document.createElement("option");
      option.value = name;
      option.textContent = name;
      select.appendChild(option);
    });
  });
  const saveButton = document.createElement("button");
  saveButton.textContent = "保存配置";
  saveButton.addEventListener("click", () => {
    void (async () => {
      try {
        await api.putConfig(state.sessionId!, { department: select.value, provider: providerSelect.value });
        state = { ...state, department: select.value };
        nav(3);
      } catch (error) {
        notify(error instanceof ApiError ? `配置失败: ${error.message}` : String(error));
      }
    })();
  });
  left.append("科室：", select, document.createElement("br"), "模型：", providerSelect, document.createElement("br"), saveButton);

  const right = document.createElement("div");
  right.innerHTML = "<h2>结构化病历</h2>";
  if (state.record) {
    for (const doc of state.record.documents) {
      const block = document.createElement("details");
      const title = document.createElement("summary");
      title.textContent = `${doc.title} · ${doc.doc_type}`;
      block.appendChild(title);
      for (const field of doc.fields) {
        const p = document.createElement("p");
        p.textContent = `${field.field_name}: ${field.content}`;
        block.appendChild(p);
      }
      right.appendChild(block);
    }
  }
  card.append(left, right);
  root.appendChild(card);
}

function renderLogicPage(root: HTMLElement): void {
  const card = document.createElement("div");
  card.className = "card";
  card.innerHTML = "<h2>执行逻辑</h2><p>可修改各条生成规则；留空保持默认。</p>";
  const list = document.createElement("div");
  card.appendChild(list);
  void fetch(`${BASE_URL}/api/departments/${state.department}/rules`)
    .then((r) => r.json())
    .then((body: { rules: { rule_id: string; ds_field: string; logic_type: string; text: string; editable: boolean }[] }) => {
      body.rules.forEach((rule) => {
        const row = document.createElement("div");
        row.className = "rule-row";
        const label = document.createElement("label");
        label.textContent = `[${rule.ds_field} · ${rule.logic_type}] `;
        const area = document.createElement("textarea");
        area.value = ruleEdits[rule.rule_id] ?? rule.text;
        area.disabled = !rule.editable;
        area.addEventListener("change", () => {
          if (area.value.trim() && area.value !== rule.text) ruleEdits[rule.rule_id] = area.value;
          else delete ruleEdits[rule.rule_id];
        });
        row.append(label, area);
        list.appendChild(row);
      });
    });
  const generateButton = document.createElement("button");
  generateButton.textContent = "生成摘要";
  generateButton.addEventListener("click", () => {
    void (async () => {
      try {
        if (Object.keys(ruleEdits).length > 0) {
          await api.putConfig(state.sessionId!, { rule_edits: ruleEdits });
        }
        const generated = await api.generate(state.sessionId!);
        const [attribution, record] = await Promise.all([
          api.getAttribution(state.sessionId!),
          api.getRecord(state.sessionId!),
        ]);
        state = { ...state, summary: generated.summary, attribution, record };
        nav(4);
      } catch (error) {
        notify(error instanceof ApiError ? `生成失败: ${error.message}` : String(error));
      }
    })();
  });
  card.appendChild(generateButton);
  root.appendChild(card);
}

function renderReviewPage(root: HTMLElement): void {
  const toolbar = document.createElement("div");
  toolbar.className = "toolbar";
  const editButton = document.createElement("button");
  editButton.textContent = "编辑选中句";
  const commentButton = document.createElement("button");
  commentButton.textContent = "添加批注";
  const exportButton = document.createElement("button");
  exportButton.textContent = "导出 Golden";
  toolbar.append(editButton, commentButton, exportButton);
  root.appendChild(toolbar);

  const container = document.createElement("div");
  container.id = "comparison";
  root.appendChild(container);

  let selected: string | null = null;
  const rerender = () =>
    renderComparison(container, state.summary!, state.reference, state.attribution!, state.record!, {
      onHover: (sid) => {
        state = setHover(state, sid);
        applyHighlight(container, state.attribution, state.hoverSid);
      },
      onSelect: (sid) => {
        selected = sid;
        const docs = sourceDocsFor(state.attribution!, state.record!, sid);
        notify(docs.length ? `来源文档: ${docs.join(", ")}` : "该句无溯源");
      },
    });
  rerender();

  editButton.addEventListener("click", () => {
    if (!selected) {
      notify("请先点击要编辑的句子");
      return;
    }
    const current = state.summary!.fields.flatMap((f) => f.sentences).find((s) => s.sid === selected);
    const text = window.prompt("修改句子", current?.text ?? "");
    if (!text) return;
    void (async () => {
      try {
        await api.editSentence(state.sessionId!, selected!, text);
        const [summary, attribution] = await Promise.all([
          api.getSummary(state.sessionId!),
          api.getAttribution(state.sessionId!),
        ]);
        state = { ...state, summary, attribution };
        rerender();
      } catch (error) {
        notify(error instanceof ApiError ? `编辑失败: ${error.message}` : String(error));
      }
    })();
  });

  commentButton.addEventListener("click", () => {
    if (!selected) {
      notify("请先点击要批注的句子");
      return;
    }
    const text = window.prompt("批注内容", "");
    if (!text) return;
    void api
      .addComment(state.sessionId!, selected, text)
      .then(({ comments }) => notify(`已保存批注（共 ${comments} 条）`))
      .catch((error) => notify(error instanceof ApiError ? `批注失败: ${error.message}` : String(error)));
  });

  exportButton.addEventListener("click", () => {
    void (async () => {
      try {
        const golden = await api.exportGolden(state.sessionId!);
        const problems = validateGoldenRecord(golden);
        if (problems.length > 0) {
          notify(`导出内容未通过校验: ${problems[0]}`);
          return;
        }
        downloadGolden(golden, `${golden.record_ref.admission_id}.golden.json`);
        notify("已导出 Golden 摘要");
      } catch (error) {
        notify(error instanceof ApiError ? `导出失败: ${error.message}` : String(error));
      }
    })();
  });
}

function render(): void {
  app.textContent = "";
  app.appendChild(renderNav());
  const root = document.createElement("main");
  app.appendChild(root);
  renderNotice();
  switch (state.page) {
    case 1:
      renderUploadPage(root);
      break;
    case 2:
      renderConfigPage(root);
      break;
    case 3:
      renderLogicPage(root);
      break;
    case 4:
      renderReviewPage(root);
      break;
  }
}

render();
