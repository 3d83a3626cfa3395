/** Tiny DOM helpers; no framework, no innerHTML with user data. */

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child instanceof Node ? child : document.createTextNode(child));
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export function statusLine(kind: "ok" | "error" | "info", text: string): HTMLElement {
  return el("div", { class: `status status-${kind}` }, [text]);
}

/** Inline receipt rendering: tx id fragment plus success / revert reason. */
export function receiptBadge(receipt: { txId: string; status: string; revertReason: string | null }): HTMLElement {
  const ok = receipt.status === "success";
  return el("span", { class: `receipt ${ok ? "receipt-ok" : "receipt-bad"}` }, [
    `tx ${receipt.txId.slice(0, 10)}… ${ok ? "success" : `reverted: ${receipt.revertReason}`}`,
  ]);
}
