// Move messages are throttled to at most one per interval (default 10/s).
// The newest pose always wins: intermediate poses are dropped, and a trailing
// flush sends the latest one once the interval reopens.

export interface ThrottledMove {
  x: number;
  y: number;
  facing: number;
}

export class MoveThrottle {
  private lastSent = Number.NEGATIVE_INFINITY;
  private pending: ThrottledMove | null = null;

  constructor(private readonly minIntervalMs = 100) {}

  /** Offer a pose at `now`; returns the move to send immediately, if any. */
  offer(move: ThrottledMove, now: number): ThrottledMove | null {
    if (now - this.lastSent >= this.minIntervalMs) {
      this.lastSent = now;
      this.pending = null;
      return move;
    }
    this.pending = move;
    return null;
  }

  /** Called periodically: releases the trailing pose once the window reopens. */
  flush(now: number): ThrottledMove | null {
    if (this.pending !== null && now - this.lastSent >= this.minIntervalMs) {
      const move = this.pending;
      this.pending = null;
      this.lastSent = now;
      return move;
    }
    return null;
  }

  hasPending(): boolean {
    return this.pending !== null;
  }
}
