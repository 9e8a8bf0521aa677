/** Fixed-capacity ring buffer; pushing past capacity evicts the oldest. */
export class RingBuffer<T> {
  private items: T[] = [];
  private head = 0;

  constructor(readonly capacity: number) {
    if (capacity < 1) throw new Error("capacity must be >= 1");
  }

  push(item: T): void {
    if (this.items.length < this.capacity) {
      this.items.push(item);
    } else {
      this.items[this.head] = item;
      this.head = (this.head + 1) % this.capacity;
    }
  }

  get length(): number {
    return this.items.length;
  }

  /** Oldest to newest. */
  toArray(): T[] {
    return this.items
      .slice(this.head)
      .concat(this.items.slice(0, this.head));
  }

  last(): T | undefined {
    if (this.items.length === 0) return undefined;
    const idx = (this.head + this.items.length - 1) % this.items.length;
    return this.items[idx];
  }

  clear(): void {
    this.items = [];
    this.head = 0;
  }
}
