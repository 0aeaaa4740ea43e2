// Hold-to-talk: while the talk button is held, typed text streams out as
// non-final fragments; releasing sends the remaining text as the final
// fragment. A plain send (no hold) is a single final message.

export interface SpeechOut {
  text: string;
  final: boolean;
}

export class HoldToTalk {
  private held = false;
  private fragmentsSent = 0;

  get isHeld(): boolean {
    return this.held;
  }

  press(): void {
    this.held = true;
    this.fragmentsSent = 0;
  }

  /** Emit a non-final fragment while held. Empty fragments are swallowed. */
  fragment(text: string): SpeechOut | null {
    const trimmed = text.trim();
    if (!this.held || !trimmed) return null;
    this.fragmentsSent += 1;
    return { text: trimmed, final: false };
  }

  /**
   * Release (or plain send). Empty final text is not sent; an utterance built
   * from earlier fragments then closes by the engine's silence window instead.
   */
  release(text: string): SpeechOut | null {
    this.held = false;
    this.fragmentsSent = 0;
    const trimmed = text.trim();
    if (!trimmed) return null;
    return { text: trimmed, final: true };
  }
}
