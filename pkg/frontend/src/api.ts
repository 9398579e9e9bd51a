// Typed client for the kiosk service endpoints. The fetch function is
// injectable so tests can run against a scripted mock.

export type SessionState = 'idle' | 'weighing' | 'classifying' | 'presenting' | 'printed';

export interface ProductDoc {
  class_id: number;
  name: string;
  price_per_kg: string;
  frequent: boolean;
  score?: number;
}

export interface LabelDoc {
  timestamp: string;
  class_id: number;
  name: string;
  weight_g: number;
  price_per_kg: string;
  total_price: string;
  session_id: string;
}

export interface SessionDoc {
  session_id: string;
  state: SessionState;
  weight_g: number | null;
  candidates: ProductDoc[];
  selected_class_id: number | null;
  label: LabelDoc | null;
  error_note: string | null;
}

export interface PostResult {
  status: number;
  body: unknown;
}

// structural subset of Response so tests can script plain objects
export interface JsonResponse {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<JsonResponse>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) {
      throw new Error(`GET ${path} failed with ${response.status}`);
    }
    return (await response.json()) as T;
  }

  private async post(path: string, body?: unknown): Promise<PostResult> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body ?? {}),
    });
    return { status: response.status, body: await response.json() };
  }

  getSession(): Promise<SessionDoc> {
    return this.getJson<SessionDoc>('/api/session');
  }

  getCatalog(): Promise<ProductDoc[]> {
    return this.getJson<ProductDoc[]>('/api/catalog');
  }

  search(query: string): Promise<ProductDoc[]> {
    return this.getJson<ProductDoc[]>(`/api/search?q=${encodeURIComponent(query)}`);
  }

  getLabels(): Promise<LabelDoc[]> {
    return this.getJson<LabelDoc[]>('/api/labels');
  }

  select(classId: number): Promise<PostResult> {
    return this.post('/api/session/select', { class_id: classId });
  }

  print(): Promise<PostResult> {
    return this.post('/api/session/print');
  }

  cancel(): Promise<PostResult> {
    return this.post('/api/session/cancel');
  }
}
