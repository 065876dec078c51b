/** Browser entry point: wires the session client to the DOM. */

import { SessionClient, SocketLike } from "./client.js";
import {
  renderCurrentCard,
  renderHistory,
  renderMetrics,
  renderQueue,
  renderStatus,
} from "./render.js";
import { UiSessionView } from "./state.js";

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing element #${id}`);
  }
  return el;
}

function render(view: UiSessionView): void {
  byId("status").innerHTML = renderStatus(view);
  byId("card").innerHTML = renderCurrentCard(view);
  byId("queue").innerHTML = renderQueue(view);
  byId("history").innerHTML = renderHistory(view);
  byId("metrics").innerHTML = renderMetrics(view);
}

function endpoint(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("ws") ?? `ws://${window.location.hostname}:8765/ws`;
}

const client = new SessionClient(
  endpoint(),
  // the browser WebSocket satisfies SocketLike structurally; the cast only
  // drops the DOM event-type specifics
  (url) => new WebSocket(url) as unknown as SocketLike,
  { onView: render },
);

byId("swipe").addEventListener("click", () => client.sendAction({ kind: "swipe" }));
byId("like").addEventListener("click", () => client.sendAction({ kind: "like" }));
byId("follow").addEventListener("click", () => client.sendAction({ kind: "follow" }));
document.addEventListener("click", (e) => {
  if ((e.target as HTMLElement).id === "reconnect") {
    client.connect();
  }
});

client.connect();
