import { describe, expect, it } from "vitest";

import {
  BOOKING_SLOTS,
  DOMAINS,
  SEARCH_SLOTS,
  buildBookCommand,
  buildSearchCommand,
  sanitizeValue,
} from "../src/composer";

describe("value sanitizing", () => {
  it("lowercases, trims and collapses whitespace", () => {
    expect(sanitizeValue("  Modern   European ")).toBe("modern european");
  });

  it("strips grammar-reserved brackets", () => {
    expect(sanitizeValue("we[ir]d [value]")).toBe("we ir d value");
  });

  it("drops empties", () => {
    expect(sanitizeValue("   ")).toBe("");
    expect(sanitizeValue("[][]")).toBe("");
  });
});

describe("search commands", () => {
  it("builds the documented restaurant command", () => {
    const command = buildSearchCommand("restaurant", [
      { slot: "food", value: "indian" },
      { slot: "pricerange", value: "expensive" },
    ]);
    expect(command).toBe("[restaurant] [food] indian [pricerange] expensive");
  });

  it("emits a bare domain switch when no slots are set", () => {
    expect(buildSearchCommand("hotel", [])).toBe("[hotel]");
  });

  it("drops rows with empty values instead of emitting parse errors", () => {
    const command = buildSearchCommand("hotel", [
      { slot: "area", value: "  " },
      { slot: "stars", value: "4" },
    ]);
    expect(command).toBe("[hotel] [stars] 4");
  });

  it("rejects unknown domains", () => {
    expect(buildSearchCommand("bakery", [])).toBeNull();
  });
});

describe("booking commands", () => {
  it("builds the documented booking command", () => {
    const command = buildBookCommand([
      { slot: "day", value: "saturday" },
      { slot: "people", value: "6" },
      { slot: "time", value: "19:30" },
    ]);
    expect(command).toBe("[booking] [day] saturday [people] 6 [time] 19:30");
  });

  it("allows the empty booking command", () => {
    expect(buildBookCommand([])).toBe("[booking]");
  });
});

describe("reachable picker combinations stay grammar-safe", () => {
  it("never emits nested or dangling brackets", () => {
    const weirdValues = ["Indian", " 19:30 ", "x[y]z", "a   b", "[]", "London Kings Cross"];
    for (const domain of DOMAINS) {
      for (const slot of SEARCH_SLOTS[domain]) {
        for (const value of weirdValues) {
          const command = buildSearchCommand(domain, [{ slot, value }]);
          expect(command).not.toBeNull();
          expect(command!).toMatch(/^\[[a-z]+\]( \[[a-z ]+\] [^\[\]]+)*$/);
        }
      }
    }
    for (const slots of Object.values(BOOKING_SLOTS)) {
      for (const slot of slots) {
        const command = buildBookCommand([{ slot, value: "x[y]z" }]);
        expect(command).toMatch(/^\[booking\]( \[[a-z ]+\] [^\[\]]+)*$/);
      }
    }
  });
});
