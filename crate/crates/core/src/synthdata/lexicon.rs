//! Word material for the two synthetic tasks.

/// Class names, index 0 = None.
pub const QUESTION_CLASSES: [&str; 6] = ["none", "address", "problem", "age", "breathing", "consciousness"];
pub const SYMPTOM_CLASSES: [&str; 6] = ["none", "consciousness", "breathing", "pain", "trauma", "hemorrhage"];

/// Relative frequency of question classes 1..=5 (percent).
pub const QUESTION_WEIGHTS: [f64; 5] = [26.3, 21.6, 21.3, 11.6, 19.2];
/// Relative frequency of symptom classes 1..=5.
pub const SYMPTOM_WEIGHTS: [f64; 5] = [24.0, 22.0, 20.0, 18.0, 16.0];

/// Call-taker questions per class (index 0 unused).
pub const QUESTIONS: [&[&str]; 6] = [
    &[],
    &[
        "what is the address",
        "whats the address of the emergency",
        "where exactly are you located",
        "tell me the exact address",
        "what street are you on",
    ],
    &[
        "what is the problem",
        "tell me exactly what happened",
        "whats going on there",
        "what is your emergency",
    ],
    &[
        "how old is she",
        "how old is he",
        "what is the age of the patient",
        "how old is the patient",
    ],
    &[
        "is she breathing normally",
        "is he breathing",
        "is the patient breathing",
        "is she breathing in a normal pattern",
    ],
    &[
        "is he conscious",
        "is she awake",
        "is he conscious and awake",
        "is the patient responding to you",
    ],
];

/// Statements that reuse the words of each question class but are not
/// questions (answers, repetitions, confirmations).
pub const STATEMENTS: [&[&str]; 6] = [
    &[],
    &[
        "the address is twelve main street",
        "we are at the address on main street",
        "i am located near the station",
        "the street is called oak lane",
    ],
    &[
        "the problem is my father fell",
        "i will tell you what happened",
        "something is going on with her",
        "this is an emergency",
    ],
    &[
        "she is about seventy years old",
        "he is old",
        "the patient is eighty",
        "her age is forty two",
    ],
    &[
        "she is breathing a little",
        "he was breathing before",
        "the breathing sounds strange",
        "i think she is breathing normally",
    ],
    &[
        "he is conscious now",
        "she was awake a minute ago",
        "he is not responding",
        "the patient is awake",
    ],
];

/// Questions outside the tracked classes (labeled None).
pub const OTHER_QUESTIONS: &[&str] = &[
    "can you hear me",
    "are you with the patient now",
    "is the door open",
    "did she take any medication",
    "do you have a phone number",
    "are you safe",
    "can you stay on the line",
];

/// Short utterances without task content.
pub const FILLERS: &[&str] = &[
    "okay",
    "yes",
    "no",
    "um hold on",
    "alright",
    "please hurry",
    "i dont know",
    "she is on the floor",
    "help is on the way",
    "thank you",
    "listen to me carefully",
    "stay calm",
    "my wife",
    "in the kitchen",
];

/// Symptom phrases per class (index 0 unused). Every occurrence is labeled.
pub const SYMPTOM_PHRASES: [&[&str]; 6] = [
    &[],
    &["completely unconscious", "passed out suddenly", "not waking up"],
    &["not breathing at all", "gasping for air", "short of breath"],
    &["severe chest pain", "pain in her stomach", "screaming in pain"],
    &["hit by a car", "fell down the stairs", "hit his head hard"],
    &["bleeding heavily", "lot of blood", "blood everywhere"],
];

/// Carrier frames for symptom phrases; `{}` marks the phrase.
pub const SYMPTOM_FRAMES: &[&str] = &[
    "she is {}",
    "he is {} right now",
    "i think he is {}",
    "my mother is {}",
    "is he {}",
    "she was {} when i found her",
    "{}",
];
