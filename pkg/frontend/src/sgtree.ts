/** Collapsible tree view of a scene-graph JSON document. */

export interface SceneNode {
  name: string;
  id: number;
  properties: string[];
  state: string[];
  placements: { destination: [string, number]; relation: string }[];
}

export function parseSceneGraph(text: string): { room: string; nodes: SceneNode[] } {
  const doc = JSON.parse(text) as Record<string, Record<string, any>>;
  const room = Object.keys(doc)[0] ?? "room";
  const nodes = Object.entries(doc[room] ?? {}).map(([name, raw]) => ({
    name,
    id: raw.id as number,
    properties: (raw.properties ?? []) as string[],
    state: (raw.state ?? []) as string[],
    placements: (raw.object_placing ?? []) as SceneNode["placements"],
  }));
  return { room, nodes };
}

export function renderSceneTree(doc: Document, text: string): HTMLElement {
  const { room, nodes } = parseSceneGraph(text);
  const details = doc.createElement("details");
  details.className = "sg-tree";
  const summary = doc.createElement("summary");
  summary.textContent = `scene graph: ${room} (${nodes.length} objects)`;
  details.appendChild(summary);
  const list = doc.createElement("ul");
  for (const node of nodes) {
    const item = doc.createElement("li");
    const inner = doc.createElement("details");
    const head = doc.createElement("summary");
    head.textContent = `${node.name} #${node.id}`;
    inner.appendChild(head);
    const meta = doc.createElement("ul");
    const add = (label: string, value: string) => {
      if (!value) return;
      const li = doc.createElement("li");
      li.textContent = `${label}: ${value}`;
      meta.appendChild(li);
    };
    add("properties", node.properties.join(", "));
    add("state", node.state.join(", "));
    add(
      "placed",
      node.placements
        .map((p) => `${p.relation} ${p.destination[0]} #${p.destination[1]}`)
        .join("; "),
    );
    inner.appendChild(meta);
    item.appendChild(inner);
    list.appendChild(item);
  }
  details.appendChild(list);
  return details;
}
