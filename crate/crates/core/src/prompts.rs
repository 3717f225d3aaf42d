//! Prompt texts sent to the chat model.
//!
//! The templates reproduce the original Python f-strings byte for byte. Note
//! the answer prompts contain a literal backslash before the quoted question:
//! in the source templates `\ ` is not a recognised escape, so Python keeps it.

use crate::llm::{ChatMessage, Role};

/// Which fixed system message opens a conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Bioasq,
    Medprocner,
}

pub const BIOASQ_SYSTEM: &str = "You are BioASQ-GPT, an AI expert in question answering, research, and information retrieval in the biomedical domain.";

pub const MEDPROCNER_SYSTEM: &str = "Eres un asistente útil que extrae procedimientos médicos de textos médicos en español. Un procedimiento médico se refiere a cualquier acción diagnóstica, terapéutica, médica o quirúrgica realizada en un paciente. Tu respuesta debe ser una lista de procedimientos en formato JSON válido.";

pub fn system_prompt(task: Task) -> ChatMessage {
    let content = match task {
        Task::Bioasq => BIOASQ_SYSTEM,
        Task::Medprocner => MEDPROCNER_SYSTEM,
    };
    ChatMessage::new(Role::System, content)
}

pub const EXPANSION_PREFIX: &str = "Expand this search query:\n";
pub const REFORMULATION_PREFIX: &str = "Given that the following search query for PubMed has returned\nno documents";
pub const RERANK_MARKER: &str = "Rerank the articles based on their relevance to the question";

pub fn expansion_prompt(question: &str) -> String {
    format!(
        "Expand this search query:\n'{question}' for PubMed by incorporating synonyms and additional terms that closely relate to the main topic and help reduce ambiguity. Assume that phrases are not stemmed; therefore, generate useful variations. Return only the query that can directly be used without any explanation text. Focus on maintaining the query's precision and relevance to the original question."
    )
}

pub fn reformulation_prompt(question: &str, original_query: &str) -> String {
    format!(
        "Given that the following search query for PubMed has returned\nno documents, please generate a broader query that retains the original question's context and relevance. Assume that phrases are not stemmed; therefore, generate useful variations. Return only the query that can directly be used without any explanation text. Focus on maintaining the query's precision and relevance to the original question. Original question: '{question}', Original query: '{original_query}'."
    )
}

/// `1. title` lines, 1-based, newline separated.
pub fn articles_list<S: AsRef<str>>(titles: &[S]) -> String {
    titles
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn rerank_prompt(articles_str: &str, question: &str, nr_of_articles: usize) -> String {
    format!(
        "{articles_str} \n\n Given these articles and the question: '{question}'. Rerank the articles based on their relevance to the question and return the top {nr_of_articles} most relevant articles as a comma separated list of their index ids. Don't explain your answer, return only this list, for example: '1, 2, 3, 4' "
    )
}

pub fn ideal_prompt(snippets: &str, body: &str) -> String {
    format!(
        " {snippets}\n\n\\ '{body}'. Answer this question by returning a single paragraph-sized text ideally summarizing the most relevant information. The maximum allowed length of the answer is 200 words. The returned answer is intended to approximate a short text that a biomedical expert would write to answer the corresponding question (e.g., including prominent supportive information)."
    )
}

pub fn yesno_prompt(snippets: &str, body: &str) -> String {
    format!(
        " {snippets}\n\n\\ '{body}'. You *must answer* only with lowercase 'yes' or 'no' even if you are not sure about the answer."
    )
}

pub fn factoid_prompt(snippets: &str, body: &str) -> String {
    format!(
        " {snippets}\n\n\\ '{body}'. Answer this question by returning only a JSON string array of entity names, numbers, or similar short expressions that are an answer to the question, ordered by decreasing confidence. The array should contain at max 5 elements but can contain less. If you don't know any answer return an empty list. Return only this list, it must not contain phrases and **must be valid JSON**."
    )
}

pub fn list_prompt(snippets: &str, body: &str) -> String {
    format!(
        " {snippets}\n\n\\ '{body}'. Answer this question by only returning a JSON string array of entity names, numbers, or similar short expressions that are an answer to the question (e.g., the most common symptoms of a disease). The returned list will have to contain no more than 100 entries of no more than 100 characters each. If you don't know any answer return an empty list. Return only this list, it must not contain phrases and **must be valid JSON**."
    )
}

pub fn procedure_extraction_prompt(text: &str) -> String {
    format!(
        "Extraiga todos los procedimientos médicos del texto delimitado por tres comillas invertidas. Devuelve una lista vacía si no se menciona ninguno. {text}"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn system_prompts() {
        let b = system_prompt(Task::Bioasq);
        assert_eq!(b.role, Role::System);
        assert!(b
            .content
            .starts_with("You are BioASQ-GPT, an AI expert in question answering"));
        assert!(system_prompt(Task::Medprocner)
            .content
            .starts_with("Eres un asistente útil que extrae procedimientos médicos"));
        assert_eq!(system_prompt(Task::Bioasq), system_prompt(Task::Bioasq));
    }

    #[test]
    fn expansion_substitution() {
        let p = expansion_prompt("What is X?");
        assert!(p.starts_with(EXPANSION_PREFIX));
        assert!(p.contains("\n'What is X?' for PubMed by incorporating synonyms"));
        assert!(p.ends_with("relevance to the original question."));
    }

    #[test]
    fn rerank_layout() {
        let list = articles_list(&["Alpha", "Beta"]);
        assert_eq!(list, "1. Alpha\n2. Beta");
        let p = rerank_prompt(&list, "q?", 2);
        assert!(p.starts_with("1. Alpha\n2. Beta \n\n Given these articles and the question: 'q?'."));
        assert!(p.contains("return the top 2 most relevant"));
        assert!(p.ends_with("for example: '1, 2, 3, 4' "));
    }

    #[test]
    fn answer_prompts_keep_literal_backslash() {
        let p = yesno_prompt("ctx", "Is it?");
        assert_eq!(
            p,
            " ctx\n\n\\ 'Is it?'. You *must answer* only with lowercase 'yes' or 'no' even if you are not sure about the answer."
        );
        assert!(ideal_prompt("", "B").starts_with(" \n\n\\ 'B'. Answer this question"));
    }
}
