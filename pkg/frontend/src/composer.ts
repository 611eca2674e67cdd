// Command composer: turns picker selections into bracket commands that are
// valid by construction, so the gateway parser never rejects them.

export const DOMAINS = [
  "restaurant",
  "hotel",
  "attraction",
  "train",
  "taxi",
  "hospital",
  "police",
] as const;

export type Domain = (typeof DOMAINS)[number];

export const SEARCH_SLOTS: Record<Domain, string[]> = {
  restaurant: ["food", "pricerange", "area", "name"],
  hotel: ["type", "pricerange", "area", "stars", "parking", "internet", "name"],
  attraction: ["type", "area", "name"],
  train: ["departure", "destination", "day", "leaveat", "arriveby"],
  taxi: ["departure", "destination", "leaveat", "arriveby"],
  hospital: ["department"],
  police: ["name"],
};

export const BOOKING_SLOTS: Record<string, string[]> = {
  restaurant: ["day", "time", "people", "select"],
  hotel: ["day", "stay", "people", "select"],
  train: ["people", "select"],
};

export const BOOKABLE: ReadonlySet<string> = new Set(Object.keys(BOOKING_SLOTS));

export interface SlotPair {
  slot: string;
  value: string;
}

// Values may come from free-text inputs; strip anything the grammar reserves
// and normalize the way the parser would, so the preview matches the echo.
export function sanitizeValue(raw: string): string {
  return raw
    .replace(/[\[\]]/g, " ")
    .toLowerCase()
    .split(/\s+/)
    .filter(Boolean)
    .join(" ");
}

export function sanitizeSlot(raw: string): string {
  return raw
    .replace(/[\[\]]/g, " ")
    .toLowerCase()
    .split(/\s+/)
    .filter(Boolean)
    .join(" ");
}

function renderPairs(pairs: SlotPair[]): string[] {
  const parts: string[] = [];
  for (const { slot, value } of pairs) {
    const cleanSlot = sanitizeSlot(slot);
    const cleanValue = sanitizeValue(value);
    if (!cleanSlot || !cleanValue) continue; // empty values would be parse errors
    parts.push(`[${cleanSlot}] ${cleanValue}`);
  }
  return parts;
}

export function buildSearchCommand(domain: string, pairs: SlotPair[]): string | null {
  if (!(DOMAINS as readonly string[]).includes(domain)) return null;
  return [`[${domain}]`, ...renderPairs(pairs)].join(" ").trim();
}

export function buildBookCommand(pairs: SlotPair[]): string {
  return ["[booking]", ...renderPairs(pairs)].join(" ").trim();
}
